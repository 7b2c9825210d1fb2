import json

import numpy as np
import pytest

from flexregion.drcc import build_state
from flexregion.uncertainty import UncertainInjection
from flexregion.validate import monte_carlo_check


def _base_load(st_):
    fl = st_.fleet
    return sum(ld.p for ld in fl.ncl) + sum(ld.p_sched for ld in fl.controllable_loads)


def test_no_uncertainty_interior_decision(make_state):
    st_ = make_state("12:00")
    calm = build_state(st_.grid, st_.fleet, uncertainty=UncertainInjection.none(st_.grid.n_x))
    rep = monte_carlo_check(calm, np.zeros(calm.n_dev), n=200, seed=0)
    assert rep.max_voltage == rep.max_current == rep.max_pv == 0.0
    assert rep.nonconverged == 0


def test_vertex_within_risk_level(make_state, region_of):
    st_ = make_state("19:00")
    poly = region_of("19:00", 32)
    for k in (2, 8, 20):
        rep = monte_carlo_check(st_, poly.decisions[k], n=2000, seed=k)
        assert rep.max_voltage <= st_.risk.eps_v
        assert rep.max_current <= st_.risk.eps_i
        assert 0 <= min(rep.v_upper.values()) and max(rep.current.values()) <= 1


def test_overscaled_decision_violates(make_state, region_of):
    st_ = make_state("19:00")
    poly = region_of("19:00", 32)
    k = next(i for i, tags in enumerate(poly.binding) if any(t.startswith("i_max") for t in tags))
    rep = monte_carlo_check(st_, 1.5 * poly.decisions[k], n=1000, seed=3)
    assert rep.max_current > 0.5


def test_deterministic_under_seed(make_state, region_of):
    st_ = make_state("12:00")
    d = region_of("12:00", 32).decisions[5]
    a = monte_carlo_check(st_, d, n=700, seed=42, chunk=300)
    b = monte_carlo_check(st_, d, n=700, seed=42, chunk=300)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    c = monte_carlo_check(st_, d, n=700, seed=43, chunk=300)
    assert json.dumps(a.to_dict()) != json.dumps(c.to_dict())


def test_disjoint_halves_agree(make_state, region_of):
    st_ = make_state("19:00")
    poly = region_of("19:00", 32)
    d = 1.02 * poly.decisions[4]
    a = monte_carlo_check(st_, d, n=2000, seed=100)
    b = monte_carlo_check(st_, d, n=2000, seed=200)
    for key in a.current:
        p = 0.5 * (a.current[key] + b.current[key])
        sd = np.sqrt(max(p * (1 - p), 1e-12) * 2 / 2000)
        assert abs(a.current[key] - b.current[key]) <= 3 * sd + 1e-12, key
    assert 0.05 < a.max_current < 0.95


@pytest.mark.parametrize("time", ["03:00", "12:00", "19:00"])
def test_loss_audit(make_state, region_of, time):
    # mean over every boundary vertex and sample; single high-Q vertices can exceed it
    st_ = make_state(time)
    poly = region_of(time, 32)
    errs = [monte_carlo_check(st_, poly.decisions[k], n=300, seed=k).head_error["mean_abs"] for k in range(32)]
    assert np.mean(errs) < 0.01 * _base_load(st_)


def test_pv_shortfall_counted(make_state):
    st_ = make_state("12:00")
    d = np.zeros(st_.n_dev)
    rep = monte_carlo_check(st_, d, n=2000, seed=0)
    # at the forecast mean an availability shortfall happens roughly half the time
    assert all(0.2 < f < 0.8 for f in rep.pv_shortfall.values())


def test_decision_length(make_state):
    st_ = make_state("12:00")
    with pytest.raises(ValueError):
        monte_carlo_check(st_, np.zeros(3), n=10)
    monte_carlo_check(st_, np.zeros(st_.n_var), n=10)


def test_trace_and_zero_samples(make_state):
    st_ = make_state("03:00")
    trace = []
    rep = monte_carlo_check(st_, np.zeros(st_.n_dev), n=5, seed=0, trace=trace)
    assert len(trace) == 5 and all(t["converged"] for t in trace)
    empty = monte_carlo_check(st_, np.zeros(st_.n_dev), n=0)
    assert empty.max_voltage == 0.0 and empty.n_samples == 0
    assert rep.eps == st_.risk.as_dict()
