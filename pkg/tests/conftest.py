import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Print one PASS/FAIL line per acceptance criterion."""
    outcome = yield
    rep = outcome.get_result()
    if rep.when != "call":
        return
    module = getattr(item, "module", None)
    if module is None or getattr(module, "__name__", "") != "test_acceptance":
        return
    tr = item.config.pluginmanager.get_plugin("terminalreporter")
    if tr is None:
        return
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    tr.write_line(f"[ACCEPTANCE] {item.name}: {status}")
