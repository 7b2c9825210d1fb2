"""Multi-directional boundary search producing the feeder-head P-Q polygon."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import socp
from .drcc import (BaseInfeasibleError, FeederState, assemble, binding_tags, direction_set,
                   model_offsets, objective_offset, variable_names)
from .powerflow import PowerFlowError

CORRECTION_ROUNDS = 6
CORRECTION_TOL = 1e-6
_NETWORK = ("v_max:", "v_min:", "i_max:")


def _network_slack(prob: socp.ConicProblem, x: np.ndarray) -> float:
    """Smallest slack among voltage and current constraints at ``x``."""
    sl = prob.slacks(x)
    vals = [s for lab, s in zip(prob.in_labels, sl["in"]) if lab.startswith(_NETWORK)]
    vals += [s for blk, s in zip(prob.soc_blocks, sl["soc"]) if blk.label.startswith(_NETWORK)]
    return min(vals, default=np.inf)


def shoelace_area(vertices) -> float:
    """Area of a simple polygon from ordered vertices (either orientation)."""
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if v.shape[0] < 3:
        raise ValueError("a polygon needs at least 3 vertices")
    x, y = v[:, 0], v[:, 1]
    return abs(0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def point_in_convex_polygon(vertices, point, tol: float = 1e-9) -> bool:
    """Membership (boundary included) for a counter-clockwise convex polygon."""
    v = _dedupe(np.asarray(vertices, dtype=float).reshape(-1, 2))
    p = np.asarray(point, dtype=float)
    if v.shape[0] == 1:
        return bool(np.linalg.norm(v[0] - p) <= tol)
    if v.shape[0] == 2:
        a, b = v
        ab = b - a
        t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0, 1)
        return bool(np.linalg.norm(a + t * ab - p) <= tol)
    e = np.roll(v, -1, axis=0) - v
    r = p - v
    cross = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0]
    scale = np.linalg.norm(e, axis=1)
    return bool(np.all(cross >= -tol * np.maximum(scale, 1.0)))


def _dedupe(v: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    keep = [0]
    for i in range(1, v.shape[0]):
        if np.linalg.norm(v[i] - v[keep[-1]]) > tol:
            keep.append(i)
    if len(keep) > 1 and np.linalg.norm(v[keep[-1]] - v[keep[0]]) <= tol:
        keep.pop()
    return v[keep]


def convex_hull_positions(vertices, tol: float = 1e-7) -> np.ndarray:
    """True for each vertex lying on the boundary of the convex hull of all vertices."""
    v = np.asarray(vertices, dtype=float)
    out = np.ones(v.shape[0], dtype=bool)
    uniq = np.unique(np.round(v, 12), axis=0)
    if uniq.shape[0] < 3:
        return out
    from scipy.spatial import ConvexHull, QhullError
    try:
        hull = ConvexHull(uniq)
    except QhullError:
        return out  # collinear: every point is on the (degenerate) hull
    eq = hull.equations  # normal . x + offset <= 0 inside
    for i, p in enumerate(v):
        d = eq[:, :2] @ p + eq[:, 2]
        out[i] = np.max(d) >= -tol
    return out


@dataclass
class FlexPolygon:
    time: str
    vertices: np.ndarray          # (k, 2) feeder-head (P, Q) in p.u., consumption positive
    base: tuple
    binding: list
    statuses: list
    objectives: np.ndarray
    decisions: np.ndarray         # (k, n_var) optimal decision per direction
    directions: np.ndarray        # (k, 2)
    base_kva: float
    epsilons: dict
    var_names: list = field(default_factory=list)
    degenerate: bool = False
    diagnostics: list = field(default_factory=list)

    @property
    def area(self) -> float:
        if self.degenerate or self.vertices.shape[0] < 3:
            return 0.0
        return shoelace_area(self.vertices)

    @property
    def vertices_si(self) -> np.ndarray:
        return self.vertices * self.base_kva

    @property
    def k_total(self) -> int:
        return self.directions.shape[0]

    def extents(self) -> dict:
        v = self.vertices
        return {"p_min": float(v[:, 0].min()), "p_max": float(v[:, 0].max()),
                "q_min": float(v[:, 1].min()), "q_max": float(v[:, 1].max())}

    def hull(self) -> np.ndarray:
        """Vertices on the convex hull, in angular order.

        Each direction carries its own model correction, so a vertex can sit
        slightly inside the hull of the others.
        """
        v = self.vertices
        return v[convex_hull_positions(v, tol=1e-12)]

    def contains(self, point, tol: float = 1e-7) -> bool:
        return point_in_convex_polygon(self.hull(), point, tol)

    def to_dict(self) -> dict:
        s = self.base_kva
        return {
            "time": self.time,
            "base": [float(self.base[0]), float(self.base[1])],
            "vertices": self.vertices.tolist(),
            "area": self.area,
            "binding": [list(b) for b in self.binding],
            "epsilons": dict(self.epsilons),
            "units": {"power": "p.u.", "base_kva": s},
            "base_si": [float(self.base[0] * s), float(self.base[1] * s)],
            "vertices_si": self.vertices_si.tolist(),
            "area_si": self.area * s * s,
            "directions": self.directions.tolist(),
            "statuses": list(self.statuses),
            "objectives": self.objectives.tolist(),
            "decisions": self.decisions.tolist(),
            "variables": list(self.var_names),
            "degenerate": self.degenerate,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlexPolygon":
        k = len(d["vertices"])
        return cls(time=d.get("time", ""), vertices=np.array(d["vertices"], dtype=float).reshape(k, 2),
                   base=tuple(d["base"]), binding=[list(b) for b in d.get("binding", [[]] * k)],
                   statuses=list(d.get("statuses", [])),
                   objectives=np.array(d.get("objectives", []), dtype=float),
                   decisions=np.array(d["decisions"], dtype=float) if "decisions" in d else np.zeros((k, 0)),
                   directions=np.array(d.get("directions", []), dtype=float).reshape(-1, 2),
                   base_kva=float(d.get("units", {}).get("base_kva", 1.0)),
                   epsilons=dict(d.get("epsilons", {})), var_names=list(d.get("variables", [])),
                   degenerate=bool(d.get("degenerate", False)),
                   diagnostics=list(d.get("diagnostics", [])))


def _degenerate(state: FeederState, dirs, names, reason: str) -> FlexPolygon:
    k = len(dirs)
    base = np.array([state.p_f, state.q_f])
    return FlexPolygon(state.time, np.tile(base, (k, 1)), (state.p_f, state.q_f), [[] for _ in dirs],
                       ["degenerate"] * k, np.array([d.lambda_p * base[0] + d.lambda_q * base[1] for d in dirs]),
                       np.zeros((k, state.n_var)), np.array([[d.lambda_p, d.lambda_q] for d in dirs]),
                       state.grid.net.base_kva, state.risk.as_dict(), names, True, [reason])


def estimate_region(state: FeederState, k_total: int = 32, jobs: int = 1, tol: float = 1e-8,
                    max_iter: int = 100, correction_rounds: int = CORRECTION_ROUNDS) -> FlexPolygon:
    """One conic solve per search direction; vertex = feeder head at the optimum.

    With ``correction_rounds > 0`` each direction is re-solved after shifting
    its voltage and current models by the nonlinear-minus-affine error seen
    at the previous optimum, until the optimum meets the shifted limits to
    within ``CORRECTION_TOL``.
    """
    dirs = direction_set(k_total)
    names = variable_names(state)
    try:
        template = assemble(state, dirs[0])
    except BaseInfeasibleError as exc:
        return _degenerate(state, dirs, names, str(exc))

    def run(d):
        c = np.zeros(state.n_var)
        c[-2], c[-1] = d.lambda_p, d.lambda_q
        prob = replace(template, c=c)
        sol = socp.solve(prob, tol=tol, max_iter=max_iter)
        note = ""
        for _ in range(correction_rounds):
            if sol.status not in (socp.OPTIMAL, socp.MAX_ITER):
                break
            try:
                offs = model_offsets(state, sol.x)
            except PowerFlowError:
                note = "power flow at vertex did not converge; correction stopped"
                break
            cand = replace(assemble(state, d, check_base=False, offsets=offs), c=c)
            if _network_slack(cand, sol.x) >= -CORRECTION_TOL:
                # the optimum already meets the limits of the corrected model;
                # binding tags stay those of the problem it solves
                break
            cand_sol = socp.solve(cand, tol=tol, max_iter=max_iter)
            if cand_sol.status not in (socp.OPTIMAL, socp.MAX_ITER):
                note = f"corrected problem {cand_sol.status}; kept previous optimum"
                break
            prob, sol = cand, cand_sol
        else:
            if correction_rounds:
                note = f"model correction not settled after {correction_rounds} rounds"
        return prob, sol, note

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, dirs))
    else:
        results = [run(d) for d in dirs]

    statuses = [sol.status for _, sol, _ in results]
    bad = [f"direction {d.index}: {sol.status}" for d, (_, sol, _) in zip(dirs, results)
           if sol.status in (socp.INFEASIBLE, socp.UNBOUNDED)]
    if bad:
        return _degenerate(state, dirs, names, "; ".join(bad))

    xs = np.array([sol.x for _, sol, _ in results])
    verts = np.column_stack([state.p_f + xs[:, -2], state.q_f + xs[:, -1]])
    objs = np.array([sol.objective + objective_offset(state, d) for d, (_, sol, _) in zip(dirs, results)])
    binding = [binding_tags(prob, sol.x, names) for prob, sol, _ in results]
    diags = [f"direction {d.index}: {st}" for d, st in zip(dirs, statuses) if st != socp.OPTIMAL]
    diags += [f"direction {d.index}: {note}" for d, (_, _, note) in zip(dirs, results) if note]
    poly = FlexPolygon(state.time, verts, (state.p_f, state.q_f), binding, statuses, objs, xs,
                       np.array([[d.lambda_p, d.lambda_q] for d in dirs]), state.grid.net.base_kva,
                       state.risk.as_dict(), names, False, diags)
    if np.ptp(verts, axis=0).max() <= 1e-9:
        poly.degenerate = True
        poly.diagnostics.append("all vertices coincide with the base point")
    return poly


def sweep_time_series(states: Sequence[FeederState], k_total: int = 32, jobs: int = 1,
                      **kw) -> list:
    """Independent polygons for a sequence of snapshots, order preserved."""
    if states:
        net0 = states[0].grid.net
        if any(s.grid.net is not net0 and s.grid.net != net0 for s in states):
            raise ValueError("all snapshots must share one network")
    return [estimate_region(s, k_total, jobs=jobs, **kw) for s in states]


# --------------------------------------------------------------------------
# plotting
# --------------------------------------------------------------------------

def write_svg(polygons: Sequence[FlexPolygon], path, titles: Optional[Sequence[str]] = None,
              si: bool = True) -> None:
    """Static side-by-side plot of one or more polygons with the base point marked."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    polygons = list(polygons)
    n = len(polygons)
    with matplotlib.rc_context({"svg.hashsalt": "flexregion", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 4.0), squeeze=False)
        for j, (ax, poly) in enumerate(zip(axes[0], polygons)):
            s = poly.base_kva if si else 1.0
            v = poly.vertices * s
            closed = np.vstack([v, v[:1]])
            ax.fill(closed[:, 0], closed[:, 1], color="#9ecae1", alpha=0.5, lw=0)
            ax.plot(closed[:, 0], closed[:, 1], "-o", color="#08519c", ms=3, lw=1.2)
            ax.plot([poly.base[0] * s], [poly.base[1] * s], "r*", ms=10, label="base point")
            unit = ("kW", "kvar") if si else ("p.u.", "p.u.")
            ax.set_xlabel(f"feeder-head P ({unit[0]})")
            ax.set_ylabel(f"feeder-head Q ({unit[1]})")
            title = titles[j] if titles else (poly.time or "snapshot")
            ax.set_title(f"{title}\narea {poly.area * s * s:.4g}")
            ax.grid(True, lw=0.3)
            ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
