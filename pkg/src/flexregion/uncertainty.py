"""Forecast-error models: risk coefficients, 1-D Gaussian mixtures fitted by EM,
per-scenario error tables and affine propagation to voltages and currents."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp, ndtr

DAY_TYPES = ("sunny", "cloudy", "overcast")
N_BINS = 4
BIN_EDGES = (0.0, 0.25, 0.5, 0.75, 1.0)

EM_RESTARTS = 10
EM_TOL = 1e-7
EM_MAX_ITER = 500
VAR_FLOOR = 1e-10


def k_epsilon(eps: float) -> float:
    """Tightening coefficient ``sqrt((1 - eps) / eps)`` of a moment-based chance constraint."""
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"risk level must lie in (0, 1), got {eps}")
    return math.sqrt((1.0 - eps) / eps)


@dataclass(frozen=True)
class RiskConfig:
    eps_p: float = 0.5
    eps_v: float = 0.05
    eps_i: float = 0.05

    def __post_init__(self):
        for name in ("eps_p", "eps_v", "eps_i"):
            k_epsilon(getattr(self, name))

    # derived on every access so they can never go stale
    @property
    def k_p(self) -> float:
        return k_epsilon(self.eps_p)

    @property
    def k_v(self) -> float:
        return k_epsilon(self.eps_v)

    @property
    def k_i(self) -> float:
        return k_epsilon(self.eps_i)

    def as_dict(self) -> dict:
        return {"eps_p": self.eps_p, "eps_v": self.eps_v, "eps_i": self.eps_i}


# --------------------------------------------------------------------------
# Gaussian mixtures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Gmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float = float("nan")
    aic: float = float("nan")
    bic: float = float("nan")
    n_samples: int = 0

    def __post_init__(self):
        for name in ("weights", "means", "variances"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.weights.shape == self.means.shape == self.variances.shape):
            raise ValueError("weights, means and variances must have equal length")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if np.any(self.variances <= 0):
            raise ValueError("component variances must be positive")

    @property
    def n_components(self) -> int:
        return self.weights.size

    def scaled(self, factor: float, shift: float = 0.0) -> "Gmm":
        """Distribution of ``factor * X + shift``."""
        return Gmm(self.weights, self.means * factor + shift, self.variances * factor ** 2)

    def log_pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return logsumexp(_component_log_pdf(x.reshape(-1), self) + np.log(self.weights), axis=1).reshape(x.shape)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_pdf(x))

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) / np.sqrt(self.variances)
        return ndtr(z) @ self.weights

    def ppf(self, u) -> np.ndarray:
        """Inverse CDF by bisection (the mixture CDF has no closed-form inverse)."""
        u = np.clip(np.asarray(u, dtype=float), 1e-300, 1 - 1e-16)
        sd = np.sqrt(self.variances)
        lo = np.full(u.shape, np.min(self.means - 40 * sd))
        hi = np.full(u.shape, np.max(self.means + 40 * sd))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-13 * max(1.0, float(np.max(np.abs(hi))))):
                break
        return 0.5 * (lo + hi)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist(), "log_likelihood": _num(self.log_likelihood),
                "aic": _num(self.aic), "bic": _num(self.bic), "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> "Gmm":
        return cls(d["weights"], d["means"], d["variances"],
                   _unnum(d.get("log_likelihood")), _unnum(d.get("aic")), _unnum(d.get("bic")),
                   int(d.get("n_samples", 0)))


def _num(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _unnum(v):
    return float("nan") if v is None else float(v)


def _component_log_pdf(x: np.ndarray, g) -> np.ndarray:
    means, variances = g.means, g.variances
    return -0.5 * (np.log(2 * np.pi * variances) + (x[:, None] - means) ** 2 / variances)


def gmm_moments(g: Gmm) -> tuple:
    """Mean and variance of the mixture."""
    mean = float(g.weights @ g.means)
    var = float(g.weights @ (g.variances + g.means ** 2) - mean ** 2)
    return mean, max(var, 0.0)


def sample_gmm(g: Gmm, n: int, seed=None) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n == 0:
        return np.zeros(0)
    comp = rng.choice(g.n_components, size=n, p=g.weights)
    return g.means[comp] + np.sqrt(g.variances[comp]) * rng.standard_normal(n)


class _Params:
    __slots__ = ("weights", "means", "variances")

    def __init__(self, w, m, v):
        self.weights, self.means, self.variances = w, m, v


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(x.size)]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(x.size)])
        else:
            centers.append(x[rng.choice(x.size, p=d2 / total)])
        d2 = np.minimum(d2, (x - centers[-1]) ** 2)
    return np.array(centers)


def _em_once(x: np.ndarray, k: int, rng, tol: float, max_iter: int, var_floor: float):
    n = x.size
    centers = _kmeanspp(x, k, rng)
    label = np.argmin(np.abs(x[:, None] - centers), axis=1)
    w = np.empty(k)
    m = np.empty(k)
    v = np.empty(k)
    total_var = max(float(x.var()), var_floor)
    for j in range(k):
        sel = x[label == j]
        w[j] = max(sel.size, 1) / n
        m[j] = sel.mean() if sel.size else centers[j]
        v[j] = max(sel.var() if sel.size > 1 else total_var, var_floor)
    w /= w.sum()
    p = _Params(w, m, v)

    ll_prev = -np.inf
    history = []
    xc = x[:, None]
    for _ in range(max_iter):
        logp = (np.log(p.weights) - 0.5 * np.log(2 * np.pi * p.variances)) - 0.5 * (xc - p.means) ** 2 / p.variances
        top = logp.max(axis=1, keepdims=True)
        r = np.exp(logp - top)
        tot = r.sum(axis=1)
        ll = float(np.sum(np.log(tot)) + top.sum())
        history.append(ll)
        # EM never decreases the likelihood; allow rounding noise only
        assert ll >= ll_prev - 1e-8 * max(1.0, abs(ll)), "EM log-likelihood decreased"
        if ll - ll_prev < tol * n:
            break
        ll_prev = ll
        r /= tot[:, None]
        nk = r.sum(axis=0)
        keep = nk > 1e-12
        if not np.all(keep):
            # dead component: drop it and restart the likelihood tracking
            p = _Params(p.weights[keep] / p.weights[keep].sum(), p.means[keep], p.variances[keep])
            ll_prev = -np.inf
            continue
        means = (x @ r) / nk
        var = ((x * x) @ r) / nk - means ** 2
        p = _Params(nk / n, means, np.maximum(var, var_floor))
    return p, history[-1], history


def _information(ll: float, k: int, n: int) -> tuple:
    n_params = 3 * k - 1
    return 2 * n_params - 2 * ll, n_params * math.log(n) - 2 * ll


@dataclass
class GmmFit:
    """Selected mixture plus the per-k information criteria."""

    best: Gmm
    ks: list
    aic: list
    bic: list
    models: list = field(default_factory=list)


def fit_gmm_curves(samples: Sequence[float], k_max: int = 5, restarts: int = EM_RESTARTS,
                   seed=0, tol: float = EM_TOL, max_iter: int = EM_MAX_ITER,
                   var_floor: float = VAR_FLOOR, require_samples: bool = True) -> GmmFit:
    x = np.asarray(samples, dtype=float).reshape(-1)
    x = x[np.isfinite(x)]
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if require_samples and n < 10 * k_max:
        raise ValueError(f"need at least {10 * k_max} samples for k_max={k_max}, got {n}")
    if np.ptp(x) == 0.0:
        ll = float(np.sum(-0.5 * np.log(2 * np.pi * var_floor) * np.ones(n)))
        aic, bic = _information(ll, 1, n)
        g = Gmm([1.0], [x[0]], [var_floor], ll, aic, bic, n)
        return GmmFit(g, [1], [aic], [bic], [g])

    rng = np.random.default_rng(seed)
    ks, aics, bics, models = [], [], [], []
    n_distinct = np.unique(x).size
    for k in range(1, k_max + 1):
        if k > n_distinct:
            break
        best = None
        for _ in range(restarts if k > 1 else 1):
            p, ll, _ = _em_once(x, k, rng, tol, max_iter, var_floor)
            if best is None or ll > best[1]:
                best = (p, ll)
        p, ll = best
        k_eff = p.weights.size
        aic, bic = _information(ll, k_eff, n)
        order = np.argsort(p.means)
        models.append(Gmm(p.weights[order], p.means[order], p.variances[order], ll, aic, bic, n))
        ks.append(k)
        aics.append(aic)
        bics.append(bic)
    best = models[int(np.argmin(bics))]
    return GmmFit(best, ks, aics, bics, models)


def fit_gmm(samples: Sequence[float], k_max: int = 5, **kw) -> Gmm:
    """EM fit for k = 1..k_max (best of several restarts each); returns the BIC minimizer."""
    return fit_gmm_curves(samples, k_max, **kw).best


# --------------------------------------------------------------------------
# scenario tables keyed by (day type, power bin)
# --------------------------------------------------------------------------

def power_bin(power_pu: float) -> int:
    """Index of the quarter-width output-level bin; 1.0 belongs to the top bin."""
    return int(min(max(math.floor(float(power_pu) * N_BINS), 0), N_BINS - 1))


@dataclass
class ErrorScenarioTable:
    models: dict  # (day_type, bin) -> Gmm
    curves: dict = field(default_factory=dict)  # (day_type, bin) -> (ks, aic, bic)
    notes: list = field(default_factory=list)

    def lookup(self, day_type: str, power_pu: float) -> Gmm:
        return self.lookup_bin(day_type, power_bin(power_pu))

    def lookup_bin(self, day_type: str, b: int) -> Gmm:
        avail = sorted(k for (d, k) in self.models if d == day_type)
        if not avail:
            raise KeyError(f"no error model for day type {day_type!r}")
        lower = [k for k in avail if k <= b]
        key = lower[-1] if lower else avail[0]
        return self.models[(day_type, key)]

    def to_dict(self) -> dict:
        return {"models": [{"day_type": d, "bin": b, **g.to_dict()}
                           for (d, b), g in sorted(self.models.items())],
                "notes": list(self.notes)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ErrorScenarioTable":
        models = {}
        for m in doc["models"]:
            models[(m["day_type"], int(m["bin"]))] = Gmm.from_dict(m)
        return cls(models, notes=list(doc.get("notes", [])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ErrorScenarioTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def read_error_history(path) -> list:
    """Rows of (day_type, power_pu, error_pu) from a CSV file."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"day_type", "power_pu", "error_pu"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"error history lacks columns: {', '.join(sorted(missing))}")
        for row in reader:
            rows.append((row["day_type"].strip().lower(), float(row["power_pu"]), float(row["error_pu"])))
    return rows


def fit_error_table(rows, k_max: int = 5, seed=0, restarts: int = EM_RESTARTS) -> ErrorScenarioTable:
    """One mixture per (day type, bin).

    Bins with fewer than ``10 * k_max`` samples use the day type's pooled fit
    (with a warning); bins with no samples are left out and resolved by the
    lower-bin fallback at lookup time.
    """
    if not rows:
        raise ValueError("no samples")
    groups: dict = {}
    pooled: dict = {}
    for d, p, e in rows:
        groups.setdefault((d, power_bin(p)), []).append(e)
        pooled.setdefault(d, []).append(e)
    need = 10 * k_max
    models, curves, notes = {}, {}, []
    pooled_fits = {}
    for key in sorted(groups):
        d, b = key
        data = groups[key]
        if len(data) >= need:
            fit = fit_gmm_curves(data, k_max, restarts=restarts, seed=seed)
        else:
            msg = f"{d} bin {b}: {len(data)} samples < {need}; using pooled {d} fit"
            warnings.warn(msg)
            notes.append(msg)
            if d not in pooled_fits:
                pool = pooled[d]
                if len(pool) < need:
                    pool = [e for _, _, e in rows]
                pooled_fits[d] = fit_gmm_curves(pool, k_max, restarts=restarts, seed=seed,
                                                require_samples=False)
            fit = pooled_fits[d]
        models[key] = fit.best
        curves[key] = (fit.ks, fit.aic, fit.bic)
    return ErrorScenarioTable(models, curves, notes)


# --------------------------------------------------------------------------
# uncertain injections and propagation
# --------------------------------------------------------------------------

@dataclass
class UncertainInjection:
    """Uncertain injection ``xi = L @ e`` driven by source errors ``e``.

    ``loadings`` maps each source (column) onto the injection vector layout;
    ``mean`` and ``cov`` are the source moments.  Sources tagged ``"pv"``
    carry a mixture (``gmms``) used only when sampling.
    """

    loadings: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    tags: tuple = ()
    kinds: tuple = ()
    gmms: tuple = ()

    def __post_init__(self):
        self.loadings = np.asarray(self.loadings, dtype=float)
        m = self.loadings.shape[1]
        self.mean = np.asarray(self.mean, dtype=float).reshape(m)
        self.cov = np.asarray(self.cov, dtype=float).reshape(m, m)
        if not np.allclose(self.cov, self.cov.T, atol=1e-14):
            raise ValueError("source covariance must be symmetric")
        if m:
            ev = np.linalg.eigvalsh(self.cov)
            if ev.min() < -1e-10 * max(1.0, ev.max()):
                raise ValueError("source covariance must be positive semidefinite")
        self.tags = tuple(self.tags) or tuple(f"s{j}" for j in range(m))
        self.kinds = tuple(self.kinds) or ("load",) * m
        self.gmms = tuple(self.gmms) or (None,) * m

    @classmethod
    def none(cls, n_x: int) -> "UncertainInjection":
        return cls(np.zeros((n_x, 0)), np.zeros(0), np.zeros((0, 0)))

    @classmethod
    def from_moments(cls, mu_xi, sigma_xi) -> "UncertainInjection":
        mu_xi = np.asarray(mu_xi, dtype=float)
        return cls(np.eye(mu_xi.size), mu_xi, sigma_xi)

    @property
    def n_sources(self) -> int:
        return self.mean.size

    @property
    def mu_xi(self) -> np.ndarray:
        return self.loadings @ self.mean

    @property
    def sigma_xi(self) -> np.ndarray:
        s = self.loadings @ self.cov @ self.loadings.T
        return 0.5 * (s + s.T)

    def scaled(self, c: float) -> "UncertainInjection":
        """Same sources with standard deviations multiplied by ``c``."""
        # a factor small enough to underflow the variances leaves a point mass
        g = tuple(None if x is None or not np.all(x.variances * c * c > 0) else
                  Gmm(x.weights, x.means, x.variances * c * c) for x in self.gmms)
        return UncertainInjection(self.loadings, self.mean, self.cov * c * c, self.tags, self.kinds, g)

    def sample_sources(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draws of the source errors, shape (m, n).

        Gaussian sources are exact.  Sources with a mixture keep that marginal;
        dependence is imposed with a Gaussian copula built from ``cov``.
        """
        m = self.n_sources
        if m == 0 or n == 0:
            return np.zeros((m, n))
        sd = np.sqrt(np.clip(np.diag(self.cov), 0.0, None))
        safe = np.where(sd > 0, sd, 1.0)
        corr = self.cov / np.outer(safe, safe)
        np.fill_diagonal(corr, np.where(sd > 0, 1.0, 0.0))
        ev, vec = np.linalg.eigh(corr)
        root = vec * np.sqrt(np.clip(ev, 0.0, None))
        z = root @ rng.standard_normal((m, n))
        out = self.mean[:, None] + sd[:, None] * z
        for j, g in enumerate(self.gmms):
            if g is None or sd[j] == 0:
                continue
            u = ndtr(z[j])
            out[j] = g.ppf(u)
        return out


@dataclass
class Propagation:
    mu_v: np.ndarray
    sigma_v: np.ndarray
    mu_i: np.ndarray
    sigma_i: np.ndarray


def _sigma(coef: np.ndarray, u: UncertainInjection) -> np.ndarray:
    if u.n_sources == 0:
        return np.zeros(coef.shape[0])
    g = coef @ u.loadings
    var = np.sum((g @ u.cov) * g, axis=1)
    return np.sqrt(np.clip(var, 0.0, None))


def propagate(ma, u: UncertainInjection, x=None) -> Propagation:
    """Moments of the affine magnitude models under ``x + xi``.

    ``ma`` is a :class:`~flexregion.powerflow.MagnitudeAffine`.
    """
    n_x = ma.v_coef.shape[1]
    x = np.zeros(n_x) if x is None else np.asarray(x, dtype=float)
    shift = x + u.mu_xi
    return Propagation(ma.v_const + ma.v_coef @ shift, _sigma(ma.v_coef, u),
                       ma.i_const + ma.i_coef @ shift, _sigma(ma.i_coef, u))


def current_radial_sigma(model, u: UncertainInjection, rows) -> np.ndarray:
    """sqrt of the largest eigenvalue of the 2x2 (Re, Im) current covariance per branch row."""
    rows = np.asarray(rows, dtype=int)
    if u.n_sources == 0:
        return np.zeros(rows.size)
    N = model.N[rows]
    gr, gi = N.real @ u.loadings, N.imag @ u.loadings
    a = np.sum((gr @ u.cov) * gr, axis=1)
    b = np.sum((gr @ u.cov) * gi, axis=1)
    d = np.sum((gi @ u.cov) * gi, axis=1)
    # largest eigenvalue of [[a, b], [b, d]]
    lam = 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + b ** 2)
    return np.sqrt(np.clip(lam, 0.0, None))
