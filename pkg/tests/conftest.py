import numpy as np
import pytest

from flexregion.drcc import build_state
from flexregion.netmodel import Bus, Line, NetworkModel, load_network
from flexregion.powerflow import GridModel
from flexregion.region import estimate_region
from flexregion.scenario import load_fleet, read_profiles, snapshot_fleet, subsample
from flexregion.synthetic import DATA_DIR
from flexregion.uncertainty import ErrorScenarioTable, RiskConfig


def two_bus(z_ohm=0.01 + 0.01j, phases="abc", base_kv=4.16, base_kva=1000.0, i_max=np.inf):
    n = len(phases)
    buses = [Bus("src", phases, is_slack=True), Bus("b1", phases)]
    lines = [Line("l1", "src", "b1", np.eye(n) * z_ohm, i_max=i_max)]
    return NetworkModel(buses, lines, base_kv=base_kv, base_kva=base_kva)


@pytest.fixture(scope="session")
def net():
    return load_network(DATA_DIR / "feeder25.json")


@pytest.fixture(scope="session")
def grid(net):
    return GridModel(net)


@pytest.fixture(scope="session")
def table():
    return ErrorScenarioTable.load(DATA_DIR / "error_table.json")


@pytest.fixture(scope="session")
def template(net):
    return load_fleet(DATA_DIR / "fleet25.json", net.base_kva)


@pytest.fixture(scope="session")
def profiles():
    return {day: {r["time"]: r for r in subsample(read_profiles(DATA_DIR / f"profiles_{day}.csv"))}
            for day in ("sunny", "cloudy", "overcast")}


@pytest.fixture(scope="session")
def make_state(grid, template, table, profiles, net):
    cache = {}

    def make(time="12:00", day="sunny", risk=None):
        key = (time, day)
        if key not in cache:
            fl = snapshot_fleet(template, profiles[day][time], net.base_kva, table, day)
            cache[key] = build_state(grid, fl, time=time)
        st = cache[key]
        return st if risk is None else st.with_risk(risk)

    return make


@pytest.fixture(scope="session")
def region_of(make_state):
    cache = {}

    def get(time="12:00", k=32, day="sunny", risk=None):
        key = (time, k, day, risk)
        if key not in cache:
            cache[key] = estimate_region(make_state(time, day, risk), k)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def default_risk():
    return RiskConfig()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("tests.test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        terminalreporter.write_line(mod.REPORT.get(n, f"criterion {n:2d}: FAIL  (not run or errored)"))
