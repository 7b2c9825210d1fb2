import json

import numpy as np
import pytest

from flexregion.netmodel import network_to_dict, validate_network
from flexregion.powerflow import GridModel
from flexregion.scenario import fleet_from_dict, pv_forecast, read_profiles, snapshot_fleet, subsample
from flexregion.synthetic import (DATA_DIR, feeder25, fleet25_dict, make_profiles, random_fleet,
                                  random_radial_feeder)
from flexregion.uncertainty import gmm_moments


def test_bundled_feeder_matches_generator(net):
    assert network_to_dict(feeder25()) == network_to_dict(net)
    assert validate_network(net) == []
    assert len(net.buses) == 25 and net.slack.id == "650"


def test_bundled_fleet_matches_generator():
    assert json.loads((DATA_DIR / "fleet25.json").read_text()) == fleet25_dict()


def test_profiles_cover_the_day(profiles):
    for day, rows in profiles.items():
        assert len(rows) == 48, day
        assert list(rows)[0] == "00:00" and list(rows)[-1] == "23:30"


def test_profile_regeneration_is_deterministic():
    doc = fleet25_dict()
    a, b = make_profiles(doc, "cloudy", seed=3), make_profiles(doc, "cloudy", seed=3)
    assert a == b
    assert a != make_profiles(doc, "cloudy", seed=4)
    with pytest.raises(ValueError):
        make_profiles(doc, "foggy")


def test_night_pv_has_no_uncertainty(profiles, template, table, net):
    fl = snapshot_fleet(template, profiles["sunny"]["03:00"], net.base_kva, table, "sunny")
    assert all(p.forecast_mu == 0 and p.forecast_sigma == 0 and p.error_gmm is None for p in fl.pv)


def test_snapshot_units(profiles, template, table, net):
    row = profiles["sunny"]["12:00"]
    fl = snapshot_fleet(template, row, net.base_kva, table, "sunny")
    ld = fl.ncl[0]
    assert ld.p == pytest.approx(float(row[f"p:{ld.bus}.{ld.phase}"]) / net.base_kva)
    for pv in fl.pv:
        point = float(row[f"pv:{pv.id}"]) / net.base_kva
        mean, var = gmm_moments(pv.error_gmm)
        assert pv.forecast_mu == pytest.approx(point + pv.s_rating * mean)
        assert pv.forecast_sigma == pytest.approx(pv.s_rating * np.sqrt(var))


def test_pv_forecast_without_table():
    assert pv_forecast(0.05, 0.1, None, "sunny") == (0.05, 0.0, None)
    assert pv_forecast(-0.01, 0.1, None, "sunny") == (0.0, 0.0, None)


def test_fleet_from_dict_multipliers():
    doc = {"controllable_loads": [{"id": "c", "bus": "671", "phases": ["a"], "p_sched_kw": 10.0}],
           "pv": [{"id": "p", "bus": "675", "phases": ["a", "b", "c"], "s_kva": 100.0}]}
    fl = fleet_from_dict(doc, 1000.0)
    (cl,) = fl.controllable_loads
    assert (cl.p_low, cl.p_sched, cl.p_high) == pytest.approx((0.008, 0.01, 0.012))
    assert fl.pv[0].s_rating == pytest.approx(0.1)
    with pytest.raises(KeyError):
        fleet_from_dict({"pv": [{"id": "p"}]}, 1000.0)


def test_subsample_and_read_errors(tmp_path):
    rows = [{"time": f"{m // 60:02d}:{m % 60:02d}"} for m in range(0, 120, 5)]
    assert [r["time"] for r in subsample(rows, 30)] == ["00:00", "00:30", "01:00", "01:30"]
    empty = tmp_path / "e.csv"
    empty.write_text("time,x\n")
    with pytest.raises(ValueError, match="no rows"):
        read_profiles(empty)
    nocol = tmp_path / "n.csv"
    nocol.write_text("t,x\n00:00,1\n")
    with pytest.raises(ValueError, match="time"):
        read_profiles(nocol)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_feeder_is_valid_and_solvable(seed):
    net = random_radial_feeder(40, seed=seed)
    assert validate_network(net) == []
    g = GridModel(net)
    fl = random_fleet(net, seed=seed, load_kw=(1, 4))
    assert fl.n_pv == 6 and fl.n_cl == 10
    from flexregion.drcc import build_state
    st = build_state(g, fl)
    assert np.all(np.abs(st.sens.base_V) > 0.8)
