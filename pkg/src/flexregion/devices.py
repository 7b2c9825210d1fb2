"""Device-level flexibility sets for controllable loads, PV inverters and batteries.

Powers are per-unit on the feeder's ``base_kva``.  Controllable loads use the
consumption convention; PV and BESS use the output (generation) convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

IEEE1547_Q_FRACTION = 0.44


@dataclass(frozen=True)
class ControllableLoad:
    id: str
    bus: str
    phases: tuple
    p_sched: float
    p_low: float
    p_high: float
    tan_theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.p_low <= self.p_sched <= self.p_high:
            raise ValueError(f"load {self.id}: need p_low <= p_sched <= p_high")
        if not np.isfinite(self.tan_theta):
            raise ValueError(f"load {self.id}: tan_theta must be finite")

    @classmethod
    def from_multipliers(cls, id, bus, phases, p_sched, low=0.8, high=1.2, tan_theta=0.0):
        return cls(id, bus, tuple(phases), p_sched, low * p_sched, high * p_sched, tan_theta)


@dataclass(frozen=True)
class PvUnit:
    id: str
    bus: str
    phases: tuple
    s_rating: float
    forecast_mu: float
    forecast_sigma: float = 0.0
    q_mode: str = "full-circle"
    pf_limit: Optional[float] = None
    p_sched: Optional[float] = None
    error_gmm: Optional[object] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.s_rating > 0:
            raise ValueError(f"PV {self.id}: s_rating must be positive")
        if self.forecast_mu < 0 or self.forecast_sigma < 0:
            raise ValueError(f"PV {self.id}: forecast moments must be non-negative")
        if self.q_mode not in ("full-circle", "ieee1547"):
            raise ValueError(f"PV {self.id}: unknown q_mode {self.q_mode!r}")

    @property
    def scheduled_p(self) -> float:
        """Base-point real output; the forecast mean unless given explicitly."""
        p = self.forecast_mu if self.p_sched is None else self.p_sched
        return min(p, self.s_rating)


@dataclass(frozen=True)
class BessUnit:
    id: str
    bus: str
    phases: tuple
    s_rating: float
    p_sched: float = 0.0
    q_sched: float = 0.0
    p_energy_limit: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.s_rating > 0:
            raise ValueError(f"BESS {self.id}: s_rating must be positive")
        if self.p_sched ** 2 + self.q_sched ** 2 > self.s_rating ** 2 * (1 + 1e-12):
            raise ValueError(f"BESS {self.id}: scheduled point outside the inverter rating")


@dataclass(frozen=True)
class FixedLoad:
    """Non-controllable load on one bus-phase (consumption, p.u.)."""

    bus: str
    phase: str
    p: float
    q: float = 0.0


@dataclass(frozen=True)
class DerFleet:
    controllable_loads: tuple = ()
    pv: tuple = ()
    bess: tuple = ()
    ncl: tuple = ()

    def __post_init__(self):
        for name in ("controllable_loads", "pv", "bess", "ncl"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def n_cl(self) -> int:
        return len(self.controllable_loads)

    @property
    def n_pv(self) -> int:
        return len(self.pv)

    @property
    def n_b(self) -> int:
        return len(self.bess)

    def check_attachments(self, terminals) -> list:
        """Diagnostics for devices attached to bus-phases that do not exist."""
        known = set(terminals)
        out = []
        for group in (self.controllable_loads, self.pv, self.bess):
            for dev in group:
                if not dev.phases:
                    out.append(f"{dev.id}: no phases")
                for p in dev.phases:
                    if (dev.bus, p) not in known:
                        out.append(f"{dev.id}: bus-phase {dev.bus}.{p} does not exist")
        for ld in self.ncl:
            if (ld.bus, ld.phase) not in known:
                out.append(f"load at {ld.bus}.{ld.phase}: bus-phase does not exist")
        return out


# --------------------------------------------------------------------------
# feasible-set descriptors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadRegion:
    p_min: float
    p_max: float
    tan_theta: float

    def contains(self, p: float, q: float, tol: float = 1e-9) -> bool:
        return (self.p_min - tol <= p <= self.p_max + tol) and abs(q - p * self.tan_theta) <= tol


@dataclass(frozen=True)
class PvRegion:
    p_up: float
    s: float
    q_cap: Optional[float] = None
    tan_pf: Optional[float] = None

    def contains(self, p: float, q: float, tol: float = 1e-9) -> bool:
        if p < -tol or p > self.p_up + tol or np.hypot(p, q) > self.s + tol:
            return False
        if self.q_cap is not None and abs(q) > self.q_cap + tol:
            return False
        if self.tan_pf is not None and abs(q) > self.tan_pf * p + tol:
            return False
        return True


@dataclass(frozen=True)
class DiskRegion:
    s: float
    p_limit: Optional[float] = None

    def contains(self, p: float, q: float, tol: float = 1e-9) -> bool:
        if self.p_limit is not None and abs(p) > self.p_limit + tol:
            return False
        return np.hypot(p, q) <= self.s + tol


def cl_bounds(load: ControllableLoad) -> LoadRegion:
    """Box on consumption with reactive power tied to it by the fixed power factor."""
    return LoadRegion(load.p_low, load.p_high, load.tan_theta)


def pv_tightened_region(pv: PvUnit, k_eps_p: float) -> PvRegion:
    """PV set with the real-power cap lowered to ``mu - K * sigma`` (never below zero)."""
    if k_eps_p < 0:
        raise ValueError("k_eps_p must be non-negative")
    p_up = max(0.0, pv.forecast_mu - k_eps_p * pv.forecast_sigma)
    p_up = min(p_up, pv.s_rating)
    q_cap = IEEE1547_Q_FRACTION * pv.s_rating if pv.q_mode == "ieee1547" else None
    return PvRegion(p_up, pv.s_rating, q_cap, pv.pf_limit)


def bess_region(b: BessUnit) -> DiskRegion:
    return DiskRegion(b.s_rating, b.p_energy_limit)


def fleet_delta_aggregate(fleet: DerFleet, cl_dp, pv_dpq, bess_dpq) -> tuple:
    """Feeder-head adjustment from per-device adjustments.

    All deltas are given as contributions to feeder-head consumption: a PV
    raising its output by 5 contributes ``-5``.  Controllable loads supply only
    their real-power change; the reactive part follows from ``tan_theta``.
    """
    cl_dp = np.asarray(cl_dp, dtype=float).reshape(-1)
    pv_dpq = np.asarray(pv_dpq, dtype=float).reshape(-1, 2)
    bess_dpq = np.asarray(bess_dpq, dtype=float).reshape(-1, 2)
    if cl_dp.size != fleet.n_cl or pv_dpq.shape[0] != fleet.n_pv or bess_dpq.shape[0] != fleet.n_b:
        raise ValueError("one adjustment per controllable device is required")
    tan = np.array([ld.tan_theta for ld in fleet.controllable_loads])
    dp = cl_dp.sum() + pv_dpq[:, 0].sum() + bess_dpq[:, 0].sum()
    dq = (cl_dp * tan).sum() + pv_dpq[:, 1].sum() + bess_dpq[:, 1].sum()
    return float(dp), float(dq)
