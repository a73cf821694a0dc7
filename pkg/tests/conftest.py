import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def acceptance_log(request):
    log = {}
    request.config._acceptance_log = log
    return log


def pytest_terminal_summary(terminalreporter, config):
    log = getattr(config, "_acceptance_log", None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(log):
        title, ok, detail = log[i]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {i} ({title}): {detail}")
