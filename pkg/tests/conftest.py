import pytest

from cortexmr import network


@pytest.fixture
def small_spec():
    return network.PopulationSpec(n_exc=8, n_inh=2, seed=7)


@pytest.fixture
def busy_spec():
    # large enough to fire regularly inside 100 ms
    return network.PopulationSpec(n_exc=240, n_inh=60, seed=1)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(passed, detail)``."""
    name = request.node.name

    def record(passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}  {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
