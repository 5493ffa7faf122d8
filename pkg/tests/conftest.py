import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# one line per acceptance criterion, printed in the terminal summary
_CRITERIA: list[tuple[int, bool, str]] = []


@pytest.fixture
def record_criterion():
    def record(number: int, ok: bool, detail: str):
        _CRITERIA.append((number, ok, detail))
        print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_CRITERIA):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status} - {detail}")


@pytest.fixture(scope="session")
def preset_runs():
    """Full-length runs of the bundled four-user presets, shared by the
    tests that compare the multiplexed arrangements against the baseline."""
    from dtmsim import load_scenario, preset_path
    from dtmsim.runner import run_scenario

    runs = {}
    for name in ("fourparty_baseline", "fourparty_dtm_id220"):
        scn = load_scenario(preset_path(name))
        runs[name] = (scn, run_scenario(scn))
    return runs
