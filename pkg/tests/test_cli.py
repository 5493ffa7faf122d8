import json

import pytest

from dtmsim.cli import main

from helpers import scenario_dict


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(type(value))


def _write_toml(data: dict, path, prefix=""):
    """Scenario dicts only use nested tables of scalars and lists."""
    lines = []

    def emit(table, crumbs):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
        subs = {k: v for k, v in table.items() if isinstance(v, dict)}
        if crumbs and (scalars or not subs):
            lines.append(f"[{'.'.join(crumbs)}]")
        for k, v in scalars.items():
            lines.append(f"{k} = {_toml_value(v)}")
        for k, v in subs.items():
            emit(v, crumbs + [k])

    emit(data, [])
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def config_file(tmp_path):
    def make(name="case.toml", **overrides):
        data = scenario_dict(
            run={"duration_s": 0.1, "accumulation_interval_s": 0.05},
            **overrides,
        )
        path = tmp_path / name
        _write_toml(data, path)
        return path

    return make


def test_run_writes_outputs(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", str(config_file()), "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "pair alice-bob:" in text
    assert "coincidences" in text
    assert (out / "manifest.json").exists()
    assert (out / "metrics_alice_bob.json").exists()
    assert (out / "timeseries_alice_bob.csv").exists()


def test_run_same_seed_is_byte_identical(config_file, tmp_path):
    cfg = config_file()
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["run", str(cfg), "--out", str(out1), "--seed", "99"]) == 0
    assert main(["run", str(cfg), "--out", str(out2), "--seed", "99"]) == 0
    name = "metrics_alice_bob.json"
    assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["files"] == m2["files"]


def test_run_seed_changes_output(config_file, tmp_path):
    cfg = config_file()
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    main(["run", str(cfg), "--out", str(out1), "--seed", "1"])
    main(["run", str(cfg), "--out", str(out2), "--seed", "2"])
    name = "metrics_alice_bob.json"
    assert (out1 / name).read_bytes() != (out2 / name).read_bytes()


def test_run_records_flag(config_file, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(config_file()), "--out", str(out), "--records"]) == 0
    records = sorted(p.name for p in out.glob("records_*.csv"))
    assert records == [
        "records_alice_1.csv",
        "records_alice_2.csv",
        "records_bob_1.csv",
        "records_bob_2.csv",
    ]
    header = (out / "records_alice_1.csv").read_text().splitlines()[0]
    assert header == "detector_id,timestamp_ps,origin"


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_invalid_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[network]\npairs = []\n")
    assert main(["run", str(bad)]) == 2
    assert "network.pairs" in capsys.readouterr().err


def test_dark_only_scenario_exits_3(config_file, capsys):
    cfg = config_file(
        name="dark.toml",
        detectors={
            "alice": {"efficiency": 0.0, "dark_rate_hz": 5000.0},
            "bob": {"efficiency": 0.0, "dark_rate_hz": 5000.0},
        },
    )
    assert main(["run", str(cfg)]) == 3
    assert "synchronization error" in capsys.readouterr().err


def test_compare_command(config_file, tmp_path, capsys):
    base_cfg = config_file(name="base.toml")
    mux_cfg = config_file(name="mux.toml", dtm={"users": ["bob"]})
    base_out, mux_out = tmp_path / "base", tmp_path / "mux"
    assert main(["run", str(base_cfg), "--out", str(base_out)]) == 0
    assert main(["run", str(mux_cfg), "--out", str(mux_out)]) == 0
    capsys.readouterr()

    report_path = tmp_path / "report.json"
    code = main(
        ["compare", str(base_out), str(mux_out), "--json", str(report_path)]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "insertion loss component" in text
    assert "combined model penalty" in text
    payload = json.loads(report_path.read_text())
    report = payload["alice-bob"]
    assert report["insertion"] == pytest.approx(1 - 0.9**0.5)
    assert report["measured_reduction"] is not None


def test_compare_identical_runs_is_zero(config_file, tmp_path, capsys):
    cfg = config_file()
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["run", str(cfg), "--out", str(out1), "--seed", "5"])
    main(["run", str(cfg), "--out", str(out2), "--seed", "5"])
    capsys.readouterr()
    report_path = tmp_path / "report.json"
    assert main(["compare", str(out1), str(out2), "--json", str(report_path)]) == 0
    report = json.loads(report_path.read_text())["alice-bob"]
    assert report["insertion"] == 0.0
    assert report["saturation"] == pytest.approx(0.0)
    assert report["measured_reduction"] == pytest.approx(0.0)


def test_compare_incompatible_exits_4(config_file, tmp_path, capsys):
    base_cfg = config_file(name="base.toml")
    other_cfg = config_file(
        name="other.toml", links={"alice": {"length_km": 7.0}}
    )
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["run", str(base_cfg), "--out", str(out1)])
    main(["run", str(other_cfg), "--out", str(out2)])
    assert main(["compare", str(out1), str(out2)]) == 4
    assert "comparison error" in capsys.readouterr().err


def test_histogram_command(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", str(config_file()), "--out", str(out), "--records"])
    capsys.readouterr()
    records = str(out / "records_alice_1.csv")

    assert main(["histogram", records]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "offset_ps,count"
    assert len(lines) == 1 + 9100 // 25

    hist_path = tmp_path / "hist.csv"
    assert main(["histogram", records, "--out", str(hist_path), "--bin-width", "50"]) == 0
    saved = hist_path.read_text().splitlines()
    assert saved[0] == "offset_ps,count"
    assert len(saved) == 1 + 9100 // 50
    total = sum(int(line.split(",")[1]) for line in saved[1:])
    n_records = sum(1 for _ in open(records)) - 1
    assert total == n_records


def test_histogram_detector_filter(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", str(config_file()), "--out", str(out), "--records"])
    capsys.readouterr()
    records = str(out / "records_bob_2.csv")
    assert main(["histogram", records, "--detector", "bob:2"]) == 0
    with_filter = capsys.readouterr().out
    assert main(["histogram", records, "--detector", "nothere"]) == 0
    empty = capsys.readouterr().out
    assert sum(int(l.split(",")[1]) for l in with_filter.splitlines()[1:]) > 0
    assert sum(int(l.split(",")[1]) for l in empty.splitlines()[1:]) == 0


def test_histogram_rejects_wrong_columns(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["histogram", str(bad)]) == 2
    assert "timestamp_ps" in capsys.readouterr().err
