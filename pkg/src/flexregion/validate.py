"""Monte-Carlo back-test of a decision against the nonlinear power flow."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .drcc import FeederState
from .powerflow import solve_fixed_point_batch

DEFAULT_SAMPLES = 10_000
CHUNK = 2_000


@dataclass
class ViolationReport:
    n_samples: int
    seed: int
    v_upper: dict          # terminal -> frequency of |V| > v_max
    v_lower: dict          # terminal -> frequency of |V| < v_min
    current: dict          # branch -> frequency of |I| > i_max
    pv_shortfall: dict     # PV id -> frequency of availability below the decided output
    nonconverged: int
    head_error: dict       # loss-approximation audit, p.u.
    v_mean: dict = field(default_factory=dict)
    v_std: dict = field(default_factory=dict)
    eps: dict = field(default_factory=dict)

    @property
    def max_voltage(self) -> float:
        vals = list(self.v_upper.values()) + list(self.v_lower.values())
        return max(vals) if vals else 0.0

    @property
    def max_current(self) -> float:
        return max(self.current.values()) if self.current else 0.0

    @property
    def max_pv(self) -> float:
        return max(self.pv_shortfall.values()) if self.pv_shortfall else 0.0

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples, "seed": self.seed,
            "max_voltage_violation": self.max_voltage, "max_current_violation": self.max_current,
            "max_pv_violation": self.max_pv, "nonconverged": self.nonconverged,
            "v_upper": self.v_upper, "v_lower": self.v_lower, "current": self.current,
            "pv_shortfall": self.pv_shortfall, "head_error": self.head_error,
            "epsilons": self.eps,
        }


def _as_decision(state: FeederState, decision) -> np.ndarray:
    d = np.asarray(decision, dtype=float).reshape(-1)
    if d.size == state.n_var:
        return d[: state.n_dev]
    if d.size != state.n_dev:
        raise ValueError(f"decision has length {d.size}, expected {state.n_dev} or {state.n_var}")
    return d


def monte_carlo_check(state: FeederState, decision, n: int = DEFAULT_SAMPLES, seed: int = 0,
                      chunk: int = CHUNK, trace: Optional[list] = None) -> ViolationReport:
    """Sample forecast errors, apply ``decision`` and test the raw limits.

    Fixed-load errors come from their Gaussian sources, PV availability from
    the full error mixture.  A PV cannot produce more than is available, so
    its realized output is ``min(decided, available)``; a shortfall counts as
    a device violation.  Non-converged samples count as violations of every
    network limit and are also tallied separately.
    """
    g = state.grid
    u = state.uncertainty
    fl = state.fleet
    delta = _as_decision(state, decision)
    x_dec = state.base_injection.vector() + state.device_map @ delta
    n_y = g.n_y

    pv_src = [j for j, k in enumerate(u.kinds) if k == "pv"]
    pv_out = np.array([pv.scheduled_p + delta[fl.n_cl + 2 * j] for j, pv in enumerate(fl.pv)])
    pv_mu = np.array([pv.forecast_mu for pv in fl.pv])
    load_mask = np.array([k != "pv" for k in u.kinds], dtype=bool)
    L_load = u.loadings[:, load_mask]
    # the PV sources' loading columns spread one unit of real power over the PV's phases
    L_pv = u.loadings[:, pv_src]

    lim = state.limits
    idx = g.load_idx
    finite_i = np.isfinite(lim.i_max)
    cnt_vu = np.zeros(idx.size)
    cnt_vl = np.zeros(idx.size)
    cnt_i = np.zeros(g.n_b)
    cnt_pv = np.zeros(fl.n_pv)
    s1 = np.zeros(idx.size)
    s2 = np.zeros(idx.size)
    nonconv = 0
    head_abs, head_max, loss_abs, loss_max = 0.0, 0.0, 0.0, 0.0
    target = state.p_f + _feeder_delta(state, delta)

    n_chunks = (n + chunk - 1) // chunk if n else 0
    streams = np.random.SeedSequence(seed).spawn(max(n_chunks, 1))
    done = 0
    for c in range(n_chunks):
        m = min(chunk, n - done)
        rng = np.random.default_rng(streams[c])
        e = u.sample_sources(m, rng)
        x = np.repeat(x_dec[:, None], m, axis=1)
        if L_load.shape[1]:
            x += L_load @ e[load_mask]
        if pv_src:
            avail = np.clip(pv_mu[:, None] + e[pv_src], 0.0, None)
            real = np.minimum(pv_out[:, None], avail)
            cnt_pv += np.sum(avail < pv_out[:, None] - 1e-12, axis=1)
            x += L_pv @ (real - pv_out[:, None])
        s_y = x[:n_y] + 1j * x[n_y: 2 * n_y]
        s_d = x[2 * n_y: 2 * n_y + g.n_d] + 1j * x[2 * n_y + g.n_d:]
        pf = solve_fixed_point_batch(g, s_y, s_d)
        ok = np.asarray(pf.converged, dtype=bool)
        v = np.abs(pf.v[idx])
        cur = np.abs(g.C_branch @ pf.v)
        bad = ~ok
        cnt_vu += np.sum((v > lim.v_max[idx, None]) | bad, axis=1)
        cnt_vl += np.sum((v < lim.v_min[idx, None]) | bad, axis=1)
        cnt_i += np.sum(((cur > lim.i_max[:, None]) & finite_i[:, None]) | (bad & finite_i[:, None]), axis=1)
        nonconv += int(bad.sum())
        if np.any(ok):
            vv = v[:, ok]
            s1 += vv.sum(axis=1)
            s2 += (vv ** 2).sum(axis=1)
            head = np.real(g.head_power(pf.v[:, ok]))
            net_load = -x[:n_y, ok].sum(axis=0)
            head_err = np.abs(head - target)
            loss_err = np.abs(head - (net_load + state.p_loss))
            head_abs += head_err.sum()
            loss_abs += loss_err.sum()
            head_max = max(head_max, float(head_err.max()))
            loss_max = max(loss_max, float(loss_err.max()))
        if trace is not None:
            for k in range(m):
                trace.append({"sample": done + k, "converged": bool(ok[k]),
                              "v_min": float(v[:, k].min()), "v_max": float(v[:, k].max())})
        done += m

    n_ok = max(n - nonconv, 1)
    names = [f"{b}.{p}" for b, p in g.load_terminals]
    br = [f"{l}.{p}" for l, p in g.branches]
    freq = (lambda a: (a / n).tolist()) if n else (lambda a: np.zeros_like(a).tolist())
    mean = s1 / n_ok
    std = np.sqrt(np.clip(s2 / n_ok - mean ** 2, 0.0, None))
    return ViolationReport(
        n_samples=n, seed=seed,
        v_upper=dict(zip(names, freq(cnt_vu))), v_lower=dict(zip(names, freq(cnt_vl))),
        current={b: f for b, f, keep in zip(br, freq(cnt_i), finite_i) if keep},
        pv_shortfall=dict(zip([p.id for p in fl.pv], freq(cnt_pv))),
        nonconverged=nonconv,
        head_error={"mean_abs": head_abs / n_ok, "max_abs": head_max,
                    "loss_mean_abs": loss_abs / n_ok, "loss_max_abs": loss_max},
        v_mean=dict(zip(names, mean.tolist())), v_std=dict(zip(names, std.tolist())),
        eps=state.risk.as_dict(),
    )


def _feeder_delta(state: FeederState, delta: np.ndarray) -> float:
    fl = state.fleet
    dp = float(np.sum(delta[: fl.n_cl]))
    for j in range(fl.n_pv + fl.n_b):
        dp -= float(delta[fl.n_cl + 2 * j])
    return dp
