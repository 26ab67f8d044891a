import os

from hypothesis import HealthCheck, settings

# deterministic example generation so failures reproduce across runs
settings.register_profile("repo", deadline=None, derandomize=True, print_blob=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("explore", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


# ---------------------------------------------------------------- acceptance summary

_TITLES = {}        # node id -> (criterion number, title)
_OUTCOMES = {}      # node id -> "PASS" | "FAIL"


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _TITLES[item.nodeid] = (mark.args[0], mark.args[1])


def pytest_runtest_logreport(report):
    # a criterion fails if any phase fails and passes once its call phase passed
    if report.nodeid not in _TITLES:
        return
    if report.failed:
        _OUTCOMES[report.nodeid] = "FAIL"
    elif report.when == "call" and report.passed:
        _OUTCOMES.setdefault(report.nodeid, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for node, (number, title) in sorted(_TITLES.items(), key=lambda kv: kv[1][0]):
        if node in _OUTCOMES:
            terminalreporter.write_line(f"criterion {number} {_OUTCOMES[node]}: {title}")
