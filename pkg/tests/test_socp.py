import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from flexregion.socp import INFEASIBLE, MAX_ITER, OPTIMAL, UNBOUNDED, ConicProblem, SocBlock, solve

from .oracles import grid_search, random_box_disk


def disk(r=1.0, n=2, centre=None, label="disk"):
    centre = np.zeros(n) if centre is None else np.asarray(centre, float)
    return SocBlock(np.eye(n), -centre, np.zeros(n), r, label)


def test_unit_disk_support():
    s = solve(ConicProblem(c=[1.0, 0.0], soc_blocks=[disk()]))
    assert s.status == OPTIMAL
    assert abs(s.objective - 1.0) < 1e-8
    np.testing.assert_allclose(s.x, [1.0, 0.0], atol=1e-7)


def test_box_lp_vertex():
    s = solve(ConicProblem(c=[1.0, 1.0], lb=[0, 0], ub=[2, 3]))
    assert s.ok and abs(s.objective - 5.0) < 1e-8
    np.testing.assert_allclose(s.x, [2, 3], atol=1e-8)


def test_random_problems_against_grid_search():
    rng = np.random.default_rng(101)
    for _ in range(40):
        prob, args = random_box_disk(rng)
        s = solve(prob)
        assert s.ok
        assert abs(s.objective - grid_search(prob.c, *args)) < 1e-4
        assert prob.max_violation(s.x) < 1e-6


def _random_lp(rng, n=5, m=8):
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(-1, 1, n)
    b = A @ x0 + rng.uniform(0.1, 1, m)
    E = rng.normal(size=(2, n))
    return rng.normal(size=n), A, b, E, E @ x0


def test_lp_matches_linprog():
    rng = np.random.default_rng(7)
    for _ in range(30):
        c, A, b, E, e = _random_lp(rng)
        lo, hi = -np.full(c.size, 3.0), np.full(c.size, 3.0)
        ref = linprog(-c, A_ub=A, b_ub=b, A_eq=E, b_eq=e, bounds=list(zip(lo, hi)), method="highs")
        s = solve(ConicProblem(c=c, A_in=A, b_in=b, A_eq=E, b_eq=e, lb=lo, ub=hi))
        assert s.ok and abs(s.objective + ref.fun) < 1e-7 * max(1, abs(ref.fun))


def test_mixed_cones_feasible_and_dual_bound():
    rng = np.random.default_rng(2)
    n = 6
    blocks = [SocBlock(rng.normal(size=(k, n)), rng.normal(size=k) * 0.1, np.zeros(n), 2.0, f"b{k}")
              for k in (2, 3, 2, 4)]
    prob = ConicProblem(c=rng.normal(size=n), soc_blocks=blocks, lb=-np.ones(n) * 5, ub=np.ones(n) * 5)
    s = solve(prob)
    assert s.ok
    assert prob.max_violation(s.x) < 1e-6
    assert s.gap < 1e-8 and s.primal_residual < 1e-8 and s.dual_residual < 1e-8


def test_infeasible_and_unbounded():
    s = solve(ConicProblem(c=[1.0], lb=[1.0], ub=[0.0]))
    assert s.status == INFEASIBLE
    s = solve(ConicProblem(c=[1.0, 0.0], A_in=[[1.0, 1.0]], b_in=[2.0], lb=[0.0, 0.0], ub=[1e9, 5]))
    assert s.ok
    s = solve(ConicProblem(c=[1.0, 0.0], A_in=[[0.0, 1.0]], b_in=[1.0]))
    assert s.status == UNBOUNDED
    s = solve(ConicProblem(c=[1.0, 1.0], soc_blocks=[disk(1.0), disk(0.5, centre=[3.0, 0.0])]))
    assert s.status == INFEASIBLE


def test_max_iter_reports_best_iterate():
    prob = ConicProblem(c=[1.0, 1.0], soc_blocks=[disk()], lb=[-2, -2], ub=[2, 2])
    s = solve(prob, max_iter=2)
    assert s.status == MAX_ITER and np.all(np.isfinite(s.x)) and s.iterations == 2


def test_validation():
    with pytest.raises(ValueError):
        ConicProblem(c=[1.0, 2.0], A_in=[[1.0, 2.0]], b_in=[1.0, 2.0])
    with pytest.raises(ValueError):
        solve(ConicProblem(c=[1.0, 2.0], soc_blocks=[disk(n=3)]))
    with pytest.raises(ValueError):
        solve(ConicProblem(c=[np.nan, 1.0]))
    with pytest.raises(ValueError):
        solve(ConicProblem(c=np.zeros(0)))


def test_json_round_trip():
    prob = ConicProblem(c=[1.0, 2.0], A_in=[[1, 1]], b_in=[1], lb=[0, -np.inf], ub=[np.inf, 3],
                        soc_blocks=[disk(2.0, centre=[0.1, 0.2])], in_labels=["cap"])
    back = ConicProblem.from_json(prob.to_json())
    assert back.to_json() == prob.to_json()
    assert np.isinf(back.lb[1]) and np.isinf(back.ub[0])
    assert solve(back).objective == pytest.approx(solve(prob).objective, abs=1e-10)


def _scaled_problem(rng):
    n = 4
    A = rng.normal(size=(6, n))
    b = np.abs(rng.normal(size=6)) + 0.5
    blocks = [SocBlock(rng.normal(size=(3, n)), np.zeros(3), np.zeros(n), 1.5, "s0")]
    return ConicProblem(c=rng.normal(size=n), A_in=A, b_in=b, soc_blocks=blocks, lb=-np.ones(n) * 4,
                        ub=np.ones(n) * 4)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_row_scaling_and_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    prob = _scaled_problem(rng)
    ref = solve(prob)
    assert ref.ok
    scale = rng.uniform(0.1, 10.0, prob.A_in.shape[0])
    blk = prob.soc_blocks[0]
    k = rng.uniform(0.1, 10.0)
    scaled = ConicProblem(c=prob.c, A_in=prob.A_in * scale[:, None], b_in=prob.b_in * scale, lb=prob.lb,
                          ub=prob.ub, soc_blocks=[SocBlock(blk.F * k, blk.g * k, blk.d * k, blk.h * k)])
    perm = rng.permutation(prob.n)
    permuted = ConicProblem(c=prob.c[perm], A_in=prob.A_in[:, perm], b_in=prob.b_in, lb=prob.lb[perm],
                            ub=prob.ub[perm], soc_blocks=[SocBlock(blk.F[:, perm], blk.g, blk.d[perm], blk.h)])
    tol = 1e-6 * max(1.0, abs(ref.objective))
    s1, s2 = solve(scaled), solve(permuted)
    assert abs(s1.objective - ref.objective) < tol
    assert abs(s2.objective - ref.objective) < tol
    assert prob.max_violation(ref.x) < 1e-6


def test_equalities_with_cones():
    # max x + y on the unit disk with x = y
    s = solve(ConicProblem(c=[1.0, 1.0], A_eq=[[1.0, -1.0]], b_eq=[0.0], soc_blocks=[disk()]))
    assert s.ok and s.objective == pytest.approx(np.sqrt(2), abs=1e-8)
