"""Fixed-point three-phase power flow and its fixed-point linearization.

The nonlinear solver iterates ``V <- w + Y_LL^{-1} i(V)`` where ``w`` is the
no-load voltage and ``i(V)`` the constant-power injection currents.  The
linear model substitutes a solved operating point into the injection-current
map, which gives an affine voltage model that is exact both at that point and
at zero load:

    V(x) = M_Y x_Y + M_D x_D + alpha,      I(x) = N_Y x_Y + N_D x_D + beta.

Injection vectors stack real then reactive power, generation positive, on the
non-slack terminals (wye) and on the phase pairs of delta buses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .netmodel import PHASES, NetworkModel, build_admittance, line_admittance, validate_network

_PHASE_ANGLE = {"a": 0.0, "b": -2 * np.pi / 3, "c": 2 * np.pi / 3}
_DELTA_PAIRS = (("a", "b"), ("b", "c"), ("c", "a"))


class PowerFlowError(RuntimeError):
    """Raised when the fixed-point iteration fails to converge."""

    def __init__(self, message: str, mismatch: float, iterations: int):
        super().__init__(f"{message} (mismatch {mismatch:.3e} after {iterations} iterations)")
        self.mismatch = mismatch
        self.iterations = iterations


class GridModel:
    """Compiled, read-only numerical view of a :class:`NetworkModel`."""

    def __init__(self, net: NetworkModel, v_source: Optional[float] = None):
        diags = validate_network(net)
        if diags:
            raise ValueError("invalid network: " + "; ".join(diags))
        self.net = net
        self.terminals = net.terminals()
        self.index = {t: i for i, t in enumerate(self.terminals)}
        slack = net.slack
        self.slack_idx = np.array([self.index[(slack.id, p)] for p in slack.phases])
        self.load_idx = np.array([i for i, t in enumerate(self.terminals) if t[0] != slack.id])
        self.load_terminals = [self.terminals[i] for i in self.load_idx]
        self.load_pos = {t: k for k, t in enumerate(self.load_terminals)}
        self.n_t = len(self.terminals)
        self.n_y = self.load_idx.size

        self.Y = build_admittance(net, "pu")
        self.Y_LL = self.Y[np.ix_(self.load_idx, self.load_idx)]
        self.Y_L0 = self.Y[np.ix_(self.load_idx, self.slack_idx)]
        self.Y_0L = self.Y[np.ix_(self.slack_idx, self.load_idx)]
        self.Y_00 = self.Y[np.ix_(self.slack_idx, self.slack_idx)]
        self.Z_LL = np.linalg.inv(self.Y_LL)
        v_source = net.v_source if v_source is None else v_source
        self.v0 = v_source * np.exp(1j * np.array([_PHASE_ANGLE[p] for p in slack.phases]))
        self.w = -self.Z_LL @ (self.Y_L0 @ self.v0)

        # delta pairs on non-slack delta buses
        self.delta_pairs = []
        for b in net.buses:
            if b.is_slack or b.connection != "D" or len(b.phases) < 2:
                continue
            for p1, p2 in _DELTA_PAIRS:
                if p1 in b.phases and p2 in b.phases:
                    self.delta_pairs.append((b.id, p1 + p2))
                    if len(b.phases) == 2:
                        break
        self.n_d = len(self.delta_pairs)
        self.H = np.zeros((self.n_d, self.n_y))
        for k, (bus, pair) in enumerate(self.delta_pairs):
            self.H[k, self.load_pos[(bus, pair[0])]] = 1.0
            self.H[k, self.load_pos[(bus, pair[1])]] = -1.0

        # branch currents: one entry per (line, phase), sending-end direction
        rows, self.branches, i_max = [], [], []
        for line in net.lines:
            phases = net.line_phases(line)
            yb = line_admittance(line, net.z_base)
            fi = [self.index[(line.from_bus, p)] for p in phases]
            ti = [self.index[(line.to_bus, p)] for p in phases]
            block = np.zeros((len(phases), self.n_t), dtype=complex)
            block[:, fi] += yb
            block[:, ti] -= yb
            rows.append(block)
            for p in phases:
                self.branches.append((line.id, p))
                i_max.append(line.i_max * 1.0 / net.i_base)
        self.C_branch = np.vstack(rows) if rows else np.zeros((0, self.n_t), dtype=complex)
        self.i_max = np.array(i_max)
        self.n_b = len(self.branches)
        bus_map = {b.id: b for b in net.buses}
        self.v_min = np.array([bus_map[t[0]].v_min for t in self.terminals])
        self.v_max = np.array([bus_map[t[0]].v_max for t in self.terminals])

    @property
    def n_x(self) -> int:
        return 2 * (self.n_y + self.n_d)

    def full_voltage(self, v_load: np.ndarray) -> np.ndarray:
        shape = (self.n_t,) + v_load.shape[1:]
        v = np.empty(shape, dtype=complex)
        v[self.load_idx] = v_load
        v[self.slack_idx] = self.v0 if v_load.ndim == 1 else self.v0[:, None]
        return v

    def head_power(self, v_full: np.ndarray) -> np.ndarray:
        """Complex power drawn from the source (feeder consumption convention)."""
        v0 = v_full[self.slack_idx]
        i0 = self.Y[self.slack_idx] @ v_full
        return np.sum(v0 * np.conj(i0), axis=0)

    def branch_current(self, v_full: np.ndarray) -> np.ndarray:
        return self.C_branch @ v_full


def as_grid(obj: Union[GridModel, NetworkModel]) -> GridModel:
    return obj if isinstance(obj, GridModel) else GridModel(obj)


@dataclass
class InjectionVector:
    """Stacked [p; q] injections for wye terminals and delta phase pairs (p.u., generation positive)."""

    x_y: np.ndarray
    x_d: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.x_y = np.asarray(self.x_y, dtype=float)
        self.x_d = np.asarray(self.x_d, dtype=float)

    @classmethod
    def zeros(cls, grid: GridModel) -> "InjectionVector":
        return cls(np.zeros(2 * grid.n_y), np.zeros(2 * grid.n_d))

    @classmethod
    def from_vector(cls, grid: GridModel, x: np.ndarray) -> "InjectionVector":
        x = np.asarray(x, dtype=float)
        return cls(x[: 2 * grid.n_y], x[2 * grid.n_y:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.x_y, self.x_d])

    def complex_y(self) -> np.ndarray:
        n = self.x_y.shape[0] // 2
        return self.x_y[:n] + 1j * self.x_y[n:]

    def complex_d(self) -> np.ndarray:
        n = self.x_d.shape[0] // 2
        return self.x_d[:n] + 1j * self.x_d[n:]

    def __add__(self, other: "InjectionVector") -> "InjectionVector":
        return InjectionVector(self.x_y + other.x_y, self.x_d + other.x_d)

    def scaled(self, factor) -> "InjectionVector":
        return InjectionVector(self.x_y * factor, self.x_d * factor)


@dataclass
class PowerFlowResult:
    v: np.ndarray            # complex voltage at every terminal
    iterations: int
    mismatch: float
    history: list = field(default_factory=list)
    converged: Union[bool, np.ndarray] = True


def _injection_current(grid: GridModel, v, s_y, s_d):
    cur = np.conj(s_y / v)
    if grid.n_d:
        cur = cur + grid.H.T @ np.conj(s_d / (grid.H @ v))
    return cur


def _mismatch(grid: GridModel, v, s_y, s_d):
    v0 = grid.v0 if v.ndim == 1 else grid.v0[:, None]
    r = grid.Y_LL @ v + grid.Y_L0 @ v0 - _injection_current(grid, v, s_y, s_d)
    return np.abs(v * np.conj(r))


def _iterate(grid: GridModel, s_y, s_d, tol, max_iter, v_init=None):
    batch = s_y.ndim == 2
    w = grid.w[:, None] if batch else grid.w
    v = (np.broadcast_to(w, s_y.shape).copy() if v_init is None else np.array(v_init, dtype=complex))
    history = []
    converged = np.zeros(s_y.shape[1] if batch else 1, dtype=bool)
    it = 0
    with np.errstate(all="ignore"):
        for it in range(1, max_iter + 1):
            v_new = w + grid.Z_LL @ _injection_current(grid, v, s_y, s_d)
            bad = ~np.isfinite(v_new) | (np.abs(v_new) < 1e-3)
            v = np.where(bad, np.nan, v_new)
            mm = _mismatch(grid, v, s_y, s_d)
            mm = np.where(np.isfinite(mm), mm, np.inf)
            per = mm.max(axis=0) if mm.size else np.zeros(converged.size)
            per = np.atleast_1d(per)
            history.append(float(per.max()))
            converged = per < tol
            if np.all(converged | ~np.isfinite(per)):
                break
    return v, it, per, history, converged


def solve_fixed_point(net, inj: InjectionVector, tol: float = 1e-8, max_iter: int = 50) -> PowerFlowResult:
    """Solve the nonlinear power flow; raises :class:`PowerFlowError` on non-convergence."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = as_grid(net)
    _check_dims(grid, inj)
    v, it, per, history, converged = _iterate(grid, inj.complex_y(), inj.complex_d(), tol, max_iter)
    if not converged[0]:
        raise PowerFlowError("fixed-point power flow did not converge", float(per[0]), it)
    return PowerFlowResult(grid.full_voltage(v), it, float(per[0]), history, True)


def solve_fixed_point_batch(grid: GridModel, s_y: np.ndarray, s_d: Optional[np.ndarray] = None,
                            tol: float = 1e-8, max_iter: int = 50) -> PowerFlowResult:
    """Vectorized solve over columns of complex injections ``s_y`` (n_y x S).

    Non-converged columns are flagged in ``result.converged`` instead of raising.
    """
    if s_d is None:
        s_d = np.zeros((grid.n_d, s_y.shape[1]), dtype=complex)
    v, it, per, history, converged = _iterate(grid, s_y, s_d, tol, max_iter)
    return PowerFlowResult(grid.full_voltage(v), it, float(np.max(per)) if per.size else 0.0,
                           history, converged)


def _check_dims(grid: GridModel, inj: InjectionVector):
    if inj.x_y.shape != (2 * grid.n_y,) or inj.x_d.shape != (2 * grid.n_d,):
        raise ValueError(
            f"injection vector has shape {inj.x_y.shape}/{inj.x_d.shape}, "
            f"expected ({2 * grid.n_y},)/({2 * grid.n_d},)")


@dataclass
class SensitivityModel:
    grid: GridModel
    M_Y: np.ndarray
    M_D: np.ndarray
    alpha: np.ndarray
    N_Y: np.ndarray
    N_D: np.ndarray
    beta: np.ndarray
    base_point: InjectionVector
    base_V: np.ndarray
    base_I: np.ndarray
    iterations: int = 0

    @property
    def M(self) -> np.ndarray:
        return np.hstack([self.M_Y, self.M_D])

    @property
    def N(self) -> np.ndarray:
        return np.hstack([self.N_Y, self.N_D])


def linearize(net, base: InjectionVector, tol: float = 1e-8, max_iter: int = 50) -> SensitivityModel:
    """Fixed-point linearization of voltages and branch currents at ``base``."""
    grid = as_grid(net)
    pf = solve_fixed_point(grid, base, tol, max_iter)
    v_hat = pf.v[grid.load_idx]
    inv_conj = 1.0 / np.conj(v_hat)
    n_t = grid.n_t

    m_y = np.zeros((n_t, 2 * grid.n_y), dtype=complex)
    core = grid.Z_LL * inv_conj[None, :]
    m_y[grid.load_idx, : grid.n_y] = core
    m_y[grid.load_idx, grid.n_y:] = -1j * core

    m_d = np.zeros((n_t, 2 * grid.n_d), dtype=complex)
    if grid.n_d:
        inv_conj_d = 1.0 / np.conj(grid.H @ v_hat)
        core_d = (grid.Z_LL @ grid.H.T) * inv_conj_d[None, :]
        m_d[grid.load_idx, : grid.n_d] = core_d
        m_d[grid.load_idx, grid.n_d:] = -1j * core_d

    alpha = grid.full_voltage(grid.w)
    n_y = grid.C_branch @ m_y
    n_d = grid.C_branch @ m_d
    beta = grid.C_branch @ alpha
    return SensitivityModel(grid, m_y, m_d, alpha, n_y, n_d, beta, base, pf.v,
                            grid.branch_current(pf.v), pf.iterations)


def _xvec(model: SensitivityModel, x) -> np.ndarray:
    if isinstance(x, InjectionVector):
        _check_dims(model.grid, x)
        return x.vector()
    x = np.asarray(x, dtype=float)
    if x.shape[0] != model.grid.n_x:
        raise ValueError(f"injection vector has length {x.shape[0]}, expected {model.grid.n_x}")
    return x


def predict_voltage(model: SensitivityModel, x) -> np.ndarray:
    xv = _xvec(model, x)
    alpha = model.alpha if xv.ndim == 1 else model.alpha[:, None]
    return model.M_Y @ xv[: model.M_Y.shape[1]] + model.M_D @ xv[model.M_Y.shape[1]:] + alpha


def predict_current(model: SensitivityModel, x) -> np.ndarray:
    xv = _xvec(model, x)
    beta = model.beta if xv.ndim == 1 else model.beta[:, None]
    return model.N_Y @ xv[: model.N_Y.shape[1]] + model.N_D @ xv[model.N_Y.shape[1]:] + beta


@dataclass
class MagnitudeAffine:
    """Real affine models ``|V| ~ v_const + v_coef @ x`` and ``|I| ~ i_const + i_coef @ x``."""

    v_coef: np.ndarray
    v_const: np.ndarray
    i_coef: np.ndarray
    i_const: np.ndarray
    low_current: np.ndarray

    def voltage(self, x: np.ndarray) -> np.ndarray:
        return self.v_const + self.v_coef @ x

    def current(self, x: np.ndarray) -> np.ndarray:
        return self.i_const + self.i_coef @ x


def magnitude_affine(model: SensitivityModel, current_floor: float = 1e-3) -> MagnitudeAffine:
    """Project the complex models onto the base-point phasor directions.

    Branches whose base current magnitude is below ``current_floor`` (p.u.)
    are flagged in ``low_current``; their projection is unreliable.
    """
    v0 = model.base_V
    if np.any(np.abs(v0) == 0):
        raise ValueError("zero base voltage")
    u = np.conj(v0) / np.abs(v0)
    M = model.M
    v_coef = np.real(u[:, None] * M)
    v_const = np.real(u * model.alpha)
    i0 = model.base_I
    mag = np.abs(i0)
    low = mag < current_floor
    ui = np.where(low, 1.0, np.conj(i0) / np.where(mag > 0, mag, 1.0))
    N = model.N
    i_coef = np.real(ui[:, None] * N)
    i_const = np.real(ui * model.beta)
    return MagnitudeAffine(v_coef, v_const, i_coef, i_const, low)
