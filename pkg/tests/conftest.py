from importlib import resources

import pytest
import yaml

from objloc import scenario


def short_scenario(name: str, ticks: int, **sensors) -> scenario.Scenario:
    """A shipped scenario cut to ``ticks`` ticks, with optional sensor overrides."""
    data = yaml.safe_load(resources.files("objloc.scenarios").joinpath(f"{name}.yaml").read_text())
    data["ticks"] = ticks
    data["sensors"].update(sensors)
    return scenario.from_dict(data)


@pytest.fixture(scope="session")
def short_static():
    sc = short_scenario("static_robot", 80)
    return sc, sc.simulate()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
