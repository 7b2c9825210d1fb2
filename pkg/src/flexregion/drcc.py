"""Per-direction boundary problem with moment-based chance constraints.

For a search direction (lambda_P, lambda_Q) the feeder-head operating point
(P_F, Q_F) is pushed as far as possible while every device stays inside its
own set and every nodal voltage and line current stays within limits with
probability at least ``1 - eps`` for any error distribution sharing the
given mean and covariance.  With the affine magnitude models those chance
constraints become linear rows whose right-hand sides shrink by ``K * sigma``.

Decision vector layout::

    [ dP_CL (n_cl) | dP_PV, dQ_PV (2 per PV) | dP_B, dQ_B (2 per BESS) | dP_F, dQ_F ]

Loads use the consumption convention, inverters the output convention and the
feeder head the consumption convention (positive P_F = power drawn from the
substation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .devices import IEEE1547_Q_FRACTION, DerFleet, pv_tightened_region
from .powerflow import (GridModel, InjectionVector, MagnitudeAffine, SensitivityModel, as_grid,
                        linearize, magnitude_affine)
from .socp import ConicProblem, SocBlock
from .uncertainty import RiskConfig, UncertainInjection, current_radial_sigma

CURRENT_FLOOR = 1e-3  # p.u.; below this the phasor projection is not trusted


class BaseInfeasibleError(ValueError):
    """The scheduled operating point already violates a tightened network limit."""

    def __init__(self, constraint: str, violation: float):
        super().__init__(f"base point outside chance-feasible set: {constraint} "
                         f"violated by {violation:.3e} p.u.")
        self.constraint = constraint
        self.violation = violation


@dataclass(frozen=True)
class SearchDirection:
    index: int
    lambda_p: float
    lambda_q: float

    def __post_init__(self):
        if abs(math.hypot(self.lambda_p, self.lambda_q) - 1.0) > 1e-12:
            raise ValueError("search direction must have unit norm")


def direction_set(k_total: int) -> list:
    if int(k_total) != k_total or k_total < 3:
        raise ValueError("at least 3 search directions are required")
    k_total = int(k_total)
    out = []
    for m in range(k_total):
        # exact values on the axes keep nested direction sets bit-identical
        a = 2 * math.pi * m / k_total
        c, s = math.cos(a), math.sin(a)
        if 4 * m % k_total == 0:
            c, s = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][4 * m // k_total]
        out.append(SearchDirection(m, c, s))
    return out


@dataclass(frozen=True)
class OperatingLimits:
    v_min: np.ndarray  # per terminal, p.u.
    v_max: np.ndarray
    i_max: np.ndarray  # per branch (line, phase), p.u.

    def __post_init__(self):
        if np.any(np.asarray(self.v_min) >= np.asarray(self.v_max)):
            raise ValueError("v_min must be below v_max")

    @classmethod
    def from_grid(cls, grid: GridModel, i_scale: float = 1.0) -> "OperatingLimits":
        return cls(grid.v_min.copy(), grid.v_max.copy(), grid.i_max * i_scale)


@dataclass
class FeederState:
    time: str
    grid: GridModel
    fleet: DerFleet
    sens: SensitivityModel
    ma: MagnitudeAffine
    uncertainty: UncertainInjection
    risk: RiskConfig
    limits: OperatingLimits
    base_injection: InjectionVector
    p_f: float
    q_f: float
    p_loss: float
    q_loss: float
    device_map: np.ndarray = field(repr=False, default=None)
    current_mode: str = "soc"
    notes: list = field(default_factory=list)
    # risk-independent network terms, keyed by the identity of their inputs
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_dev(self) -> int:
        return self.fleet.n_cl + 2 * self.fleet.n_pv + 2 * self.fleet.n_b

    @property
    def n_var(self) -> int:
        return self.n_dev + 2

    def with_risk(self, risk: RiskConfig) -> "FeederState":
        from dataclasses import replace
        return replace(self, risk=risk)


# --------------------------------------------------------------------------
# state construction
# --------------------------------------------------------------------------

def _split(dev, grid: GridModel):
    """Load-terminal positions of a device's phases; power splits evenly across them."""
    return [grid.load_pos[(dev.bus, p)] for p in dev.phases]


def base_injection(grid: GridModel, fleet: DerFleet) -> InjectionVector:
    n = grid.n_y
    s = np.zeros(n, dtype=complex)
    for ld in fleet.ncl:
        s[grid.load_pos[(ld.bus, ld.phase)]] -= ld.p + 1j * ld.q
    for ld in fleet.controllable_loads:
        pos = _split(ld, grid)
        s[pos] -= (ld.p_sched + 1j * ld.p_sched * ld.tan_theta) / len(pos)
    for pv in fleet.pv:
        pos = _split(pv, grid)
        s[pos] += pv.scheduled_p / len(pos)
    for b in fleet.bess:
        pos = _split(b, grid)
        s[pos] += (b.p_sched + 1j * b.q_sched) / len(pos)
    return InjectionVector(np.concatenate([s.real, s.imag]), np.zeros(2 * grid.n_d))


def device_map(grid: GridModel, fleet: DerFleet) -> np.ndarray:
    """Injection change (n_x) per unit of each device decision variable."""
    n = grid.n_y
    cols = []
    for ld in fleet.controllable_loads:
        col = np.zeros(grid.n_x)
        pos = _split(ld, grid)
        col[pos] -= 1.0 / len(pos)
        col[[n + k for k in pos]] -= ld.tan_theta / len(pos)
        cols.append(col)
    for dev in list(fleet.pv) + list(fleet.bess):
        pos = _split(dev, grid)
        cp = np.zeros(grid.n_x)
        cp[pos] = 1.0 / len(pos)
        cq = np.zeros(grid.n_x)
        cq[[n + k for k in pos]] = 1.0 / len(pos)
        cols += [cp, cq]
    return np.column_stack(cols) if cols else np.zeros((grid.n_x, 0))


def default_uncertainty(grid: GridModel, fleet: DerFleet, load_sigma: float = 0.01,
                        pv_correlation: float = 0.0) -> UncertainInjection:
    """Load errors on the fixed loads plus availability errors of each PV.

    A fixed load's relative error moves its P and Q together (one source per
    load, std ``load_sigma``).  PV sources are zero-mean with the forecast
    standard deviation; ``pv_correlation`` couples all PV sources equally.
    """
    n = grid.n_y
    cols, sd, tags, kinds, gmms = [], [], [], [], []
    for ld in fleet.ncl:
        if ld.p == 0 and ld.q == 0:
            continue
        col = np.zeros(grid.n_x)
        k = grid.load_pos[(ld.bus, ld.phase)]
        col[k] = -ld.p
        col[n + k] = -ld.q
        cols.append(col)
        sd.append(load_sigma)
        tags.append(f"load:{ld.bus}.{ld.phase}")
        kinds.append("load")
        gmms.append(None)
    pv_first = len(cols)
    for pv in fleet.pv:
        col = np.zeros(grid.n_x)
        pos = _split(pv, grid)
        col[pos] = 1.0 / len(pos)
        cols.append(col)
        sd.append(pv.forecast_sigma)
        tags.append(f"pv:{pv.id}")
        kinds.append("pv")
        gmms.append(None if pv.error_gmm is None or pv.forecast_sigma == 0
                    else _centered(pv.error_gmm, pv.s_rating))
    m = len(cols)
    sd = np.array(sd, dtype=float)
    corr = np.eye(m)
    if pv_correlation and fleet.n_pv > 1:
        blk = slice(pv_first, m)
        corr[blk, blk] = pv_correlation
        np.fill_diagonal(corr, 1.0)
    cov = corr * np.outer(sd, sd)
    loadings = np.column_stack(cols) if cols else np.zeros((grid.n_x, 0))
    return UncertainInjection(loadings, np.zeros(m), cov, tags, kinds, gmms)


def _centered(gmm, scale):
    from .uncertainty import gmm_moments
    mean, _ = gmm_moments(gmm)
    return gmm.scaled(scale, -mean * scale)


def build_state(net, fleet: DerFleet, risk: Optional[RiskConfig] = None,
                uncertainty: Optional[UncertainInjection] = None, time: str = "",
                limits: Optional[OperatingLimits] = None, load_sigma: float = 0.01,
                pv_correlation: float = 0.0, current_mode: str = "soc") -> FeederState:
    """Solve the scheduled operating point, linearize there and collect everything
    the per-direction problems need."""
    grid = as_grid(net)
    diags = fleet.check_attachments(grid.terminals)
    slack_id = grid.net.slack.id
    diags += [f"{d.id}: attached to the slack bus" for grp in (fleet.controllable_loads, fleet.pv, fleet.bess)
              for d in grp if d.bus == slack_id]
    if diags:
        raise ValueError("invalid fleet: " + "; ".join(diags))
    if current_mode not in ("project", "soc"):
        raise ValueError("current_mode must be 'project' or 'soc'")
    risk = risk or RiskConfig()
    inj = base_injection(grid, fleet)
    sens = linearize(grid, inj)
    ma = magnitude_affine(sens, CURRENT_FLOOR)
    head = complex(grid.head_power(sens.base_V))
    net_load = -complex(np.sum(inj.complex_y()))
    if uncertainty is None:
        uncertainty = default_uncertainty(grid, fleet, load_sigma, pv_correlation)
    return FeederState(time, grid, fleet, sens, ma, uncertainty, risk,
                       limits or OperatingLimits.from_grid(grid), inj, head.real, head.imag,
                       head.real - net_load.real, head.imag - net_load.imag,
                       device_map(grid, fleet), current_mode)


# --------------------------------------------------------------------------
# problem assembly
# --------------------------------------------------------------------------

@dataclass
class SystemRows:
    """Tightened network constraints ``A @ delta <= b`` plus SOC fallbacks."""

    A: np.ndarray
    b: np.ndarray
    labels: list
    soc: list
    sigma_v: np.ndarray
    sigma_i: np.ndarray


@dataclass(frozen=True)
class ModelOffsets:
    """Observed nonlinear-minus-affine model errors added to the constraint models.

    ``v`` is per load terminal (magnitude, p.u.); ``i`` per branch (complex,
    for the cone form) and ``i_mag`` per branch (magnitude, for the projected form).
    """

    v: np.ndarray
    i: np.ndarray
    i_mag: np.ndarray

    @classmethod
    def zero(cls, grid: GridModel) -> "ModelOffsets":
        return cls(np.zeros(grid.n_y), np.zeros(grid.n_b, dtype=complex), np.zeros(grid.n_b))


@dataclass
class _NetworkTerms:
    dv: np.ndarray            # voltage rows over the decision vector
    mu_v: np.ndarray
    sigma_v: np.ndarray       # all buses
    lin: np.ndarray           # branch rows in projected-magnitude form
    di: np.ndarray
    mu_i: np.ndarray
    sigma_i: np.ndarray
    soc: np.ndarray           # branch rows in cone form
    soc_F: list
    soc_i0: np.ndarray
    soc_sigma: np.ndarray


def _network_terms(state: FeederState) -> _NetworkTerms:
    key = (id(state.sens), id(state.ma), id(state.uncertainty), id(state.device_map),
           id(state.base_injection), state.current_mode, tuple(np.isfinite(state.limits.i_max)))
    hit = state._cache.get("net")
    if hit is not None and hit[0] == key:
        return hit[2]
    from .uncertainty import propagate

    g = state.grid
    u = state.uncertainty
    ma = state.ma
    D = state.device_map
    idx = g.load_idx

    def pad(a):
        return np.hstack([a, np.zeros((a.shape[0], 2))])

    prop = propagate(ma, u, state.base_injection.vector())
    finite = np.isfinite(state.limits.i_max)
    soc_rows = finite & (ma.low_current | (state.current_mode == "soc"))
    lin = np.flatnonzero(finite & ~soc_rows)
    soc = np.flatnonzero(soc_rows)
    x0 = state.base_injection.vector() + u.mu_xi
    N = state.sens.N
    nd = N[soc] @ D
    soc_F = [pad(np.vstack([r.real, r.imag])) for r in nd]
    terms = _NetworkTerms(
        pad(ma.v_coef[idx] @ D), prop.mu_v[idx], prop.sigma_v,
        lin, pad(ma.i_coef[lin] @ D), prop.mu_i[lin], prop.sigma_i,
        soc, soc_F, N[soc] @ x0 + state.sens.beta[soc],
        current_radial_sigma(state.sens, u, soc) if soc.size else np.zeros(0))
    # the inputs are held so their ids cannot be recycled while cached
    state._cache["net"] = (key, (state.sens, state.ma, u, D, state.base_injection), terms)
    return terms


def system_rows(state: FeederState, offsets: Optional[ModelOffsets] = None) -> SystemRows:
    g = state.grid
    off = offsets or ModelOffsets.zero(g)
    t = _network_terms(state)
    lim = state.limits
    idx = g.load_idx
    k_v, k_i = state.risk.k_v, state.risk.k_i
    mu_v = t.mu_v + off.v
    sig_v = t.sigma_v[idx]
    names = [f"{b}.{p}" for (b, p) in g.load_terminals]
    rows = [t.dv, -t.dv]
    rhs = [lim.v_max[idx] - mu_v - k_v * sig_v, -(lim.v_min[idx] - mu_v) - k_v * sig_v]
    labels = [f"v_max:{n}" for n in names] + [f"v_min:{n}" for n in names]

    sig_i = t.sigma_i.copy()
    br = [f"{l}.{p}" for (l, p) in g.branches]
    if t.lin.size:
        sel = t.lin
        rows.append(t.di)
        rhs.append(lim.i_max[sel] - t.mu_i - off.i_mag[sel] - k_i * t.sigma_i[sel])
        labels += [f"i_max:{br[r]}" for r in sel]
    soc = []
    zeros = np.zeros(state.n_var)
    for k, r in enumerate(t.soc):
        i0 = t.soc_i0[k] + off.i[r]
        soc.append(SocBlock(t.soc_F[k], [i0.real, i0.imag], zeros,
                            lim.i_max[r] - k_i * t.soc_sigma[k], f"i_max:{br[r]}"))
        sig_i[r] = t.soc_sigma[k]
    return SystemRows(np.vstack(rows), np.concatenate(rhs), labels, soc, t.sigma_v, sig_i)


def device_constraints(state: FeederState):
    """Bounds, extra rows and SOC disks of the device sets around the schedule."""
    fl = state.fleet
    n_var = state.n_var
    lb = np.full(n_var, -np.inf)
    ub = np.full(n_var, np.inf)
    rows, rhs, labels, soc = [], [], [], []
    k_p = state.risk.k_p

    for i, ld in enumerate(fl.controllable_loads):
        lb[i] = ld.p_low - ld.p_sched
        ub[i] = ld.p_high - ld.p_sched

    def row(entries):
        r = np.zeros(n_var)
        for j, v in entries:
            r[j] = v
        return r

    off = fl.n_cl
    for j, pv in enumerate(fl.pv):
        ip, iq = off + 2 * j, off + 2 * j + 1
        reg = pv_tightened_region(pv, k_p)
        p0, q0 = pv.scheduled_p, 0.0
        lb[ip] = -p0
        ub[ip] = reg.p_up - p0
        F = np.zeros((2, n_var))
        F[0, ip] = F[1, iq] = 1.0
        soc.append(SocBlock(F, [p0, q0], np.zeros(n_var), pv.s_rating, f"pv_s:{pv.id}"))
        if reg.q_cap is not None:
            lb[iq] = -reg.q_cap - q0
            ub[iq] = reg.q_cap - q0
        if reg.tan_pf is not None:
            # |q0 + dq| <= tan * (p0 + dp)
            rows += [row([(iq, 1.0), (ip, -reg.tan_pf)]), row([(iq, -1.0), (ip, -reg.tan_pf)])]
            rhs += [reg.tan_pf * p0 - q0, reg.tan_pf * p0 + q0]
            labels += [f"pv_pf:{pv.id}", f"pv_pf:{pv.id}"]

    off = fl.n_cl + 2 * fl.n_pv
    for k, b in enumerate(fl.bess):
        ip, iq = off + 2 * k, off + 2 * k + 1
        F = np.zeros((2, n_var))
        F[0, ip] = F[1, iq] = 1.0
        soc.append(SocBlock(F, [b.p_sched, b.q_sched], np.zeros(n_var), b.s_rating, f"bess_s:{b.id}"))
        if b.p_energy_limit is not None:
            lb[ip] = -b.p_energy_limit - b.p_sched
            ub[ip] = b.p_energy_limit - b.p_sched
    return lb, ub, rows, rhs, labels, soc


def balance_rows(state: FeederState) -> np.ndarray:
    """Equalities tying (dP_F, dQ_F) to the device adjustments with losses held fixed."""
    fl = state.fleet
    A = np.zeros((2, state.n_var))
    for i, ld in enumerate(fl.controllable_loads):
        A[0, i] = 1.0
        A[1, i] = ld.tan_theta
    off = fl.n_cl
    for j in range(fl.n_pv + fl.n_b):
        A[0, off + 2 * j] = -1.0
        A[1, off + 2 * j + 1] = -1.0
    A[0, -2] = -1.0
    A[1, -1] = -1.0
    return A


def assemble(state: FeederState, direction: SearchDirection, check_base: bool = True,
             offsets: Optional[ModelOffsets] = None) -> ConicProblem:
    n_var = state.n_var
    sysr = system_rows(state, offsets)
    if check_base and sysr.b.size:
        worst = int(np.argmin(sysr.b))
        if sysr.b[worst] < -1e-9:
            raise BaseInfeasibleError(sysr.labels[worst], -float(sysr.b[worst]))
    for blk in sysr.soc:
        if check_base and blk.slack(np.zeros(n_var)) < -1e-9:
            raise BaseInfeasibleError(blk.label, -blk.slack(np.zeros(n_var)))

    lb, ub, drows, drhs, dlabels, dsoc = device_constraints(state)
    A_in = np.vstack([sysr.A] + ([np.array(drows)] if drows else []))
    b_in = np.concatenate([sysr.b, np.array(drhs, dtype=float)])
    c = np.zeros(n_var)
    c[-2], c[-1] = direction.lambda_p, direction.lambda_q
    return ConicProblem(c=c, A_eq=balance_rows(state), b_eq=np.zeros(2), A_in=A_in, b_in=b_in,
                        soc_blocks=dsoc + sysr.soc, lb=lb, ub=ub,
                        in_labels=sysr.labels + dlabels, eq_labels=["balance_p", "balance_q"])


def objective_offset(state: FeederState, direction: SearchDirection) -> float:
    """Constant that turns the delta objective into lambda . (P_F, Q_F)."""
    return direction.lambda_p * state.p_f + direction.lambda_q * state.q_f


def split_decision(state: FeederState, x: np.ndarray) -> dict:
    fl = state.fleet
    x = np.asarray(x, dtype=float)
    off_b = fl.n_cl + 2 * fl.n_pv
    return {
        "cl_dp": x[: fl.n_cl],
        "pv_dpq": x[fl.n_cl: off_b].reshape(-1, 2),
        "bess_dpq": x[off_b: off_b + 2 * fl.n_b].reshape(-1, 2),
        "feeder": x[-2:],
    }


def binding_tags(problem: ConicProblem, x: np.ndarray, names: Optional[list] = None,
                 tol: float = 1e-6) -> list:
    """Labels of constraints active at ``x``."""
    sl = problem.slacks(x)
    tags = [problem.in_labels[i] for i in np.flatnonzero(sl["in"] <= tol)]
    tags += [blk.label for blk, s in zip(problem.soc_blocks, sl["soc"]) if s <= tol]
    names = names or [f"x[{j}]" for j in range(problem.n)]
    tags += [f"lb:{names[j]}" for j in np.flatnonzero(sl["lb"] <= tol)]
    tags += [f"ub:{names[j]}" for j in np.flatnonzero(sl["ub"] <= tol)]
    return tags


def variable_names(state: FeederState) -> list:
    fl = state.fleet
    names = [f"dP_CL:{ld.id}" for ld in fl.controllable_loads]
    for pv in fl.pv:
        names += [f"dP_PV:{pv.id}", f"dQ_PV:{pv.id}"]
    for b in fl.bess:
        names += [f"dP_B:{b.id}", f"dQ_B:{b.id}"]
    return names + ["dP_F", "dQ_F"]



def model_offsets(state: FeederState, delta: np.ndarray, tol: float = 1e-10) -> ModelOffsets:
    """Nonlinear-minus-affine errors of the constraint models at decision ``delta``.

    The nonlinear power flow is solved at the expected injection.
    """
    from .powerflow import solve_fixed_point
    g = state.grid
    x = state.base_injection.vector() + state.uncertainty.mu_xi + state.device_map @ delta[: state.n_dev]
    pf = solve_fixed_point(g, InjectionVector.from_vector(g, x), tol=tol, max_iter=100)
    v_err = np.abs(pf.v[g.load_idx]) - state.ma.voltage(x)[g.load_idx]
    i_lin = state.sens.N @ x + state.sens.beta
    i_nl = g.branch_current(pf.v)
    return ModelOffsets(v_err, i_nl - i_lin, np.abs(i_nl) - state.ma.current(x))
