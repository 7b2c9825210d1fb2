"""Dense primal-dual interior-point solver for small second-order cone programs.

Problems are posed as

    maximize    c @ x
    subject to  A_eq @ x == b_eq
                A_in @ x <= b_in
                ||F_k @ x + g_k|| <= d_k @ x + h_k      for every SOC block k
                lb <= x <= ub

and solved through a homogeneous self-dual embedding with Nesterov-Todd
scaling and a Mehrotra predictor-corrector step.  All linear algebra is dense;
the intended problem sizes are a few hundred variables and a few thousand
constraint rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"

_STEP_FRACTION = 0.99
_FIXED_TOL = 1e-12
_POLISH = 1e-2
_STALL = 4
_REFINE = 3


@dataclass
class SocBlock:
    """Constraint ``||F x + g||_2 <= d @ x + h``."""

    F: np.ndarray
    g: np.ndarray
    d: np.ndarray
    h: float
    label: str = ""

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        self.h = float(self.h)

    def slack(self, x: np.ndarray) -> float:
        return float(self.d @ x + self.h - np.linalg.norm(self.F @ x + self.g))


@dataclass
class ConicProblem:
    """Linear objective over linear and second-order cone constraints (maximization)."""

    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_in: Optional[np.ndarray] = None
    b_in: Optional[np.ndarray] = None
    soc_blocks: list = field(default_factory=list)
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    in_labels: Optional[list] = None
    eq_labels: Optional[list] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.A_eq, self.b_eq = _as_rows(self.A_eq, self.b_eq, n)
        self.A_in, self.b_in = _as_rows(self.A_in, self.b_in, n)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).copy()
        if self.in_labels is None:
            self.in_labels = [f"in[{i}]" for i in range(self.A_in.shape[0])]
        if self.eq_labels is None:
            self.eq_labels = [f"eq[{i}]" for i in range(self.A_eq.shape[0])]

    @property
    def n(self) -> int:
        return self.c.size

    def validate(self) -> None:
        n = self.n
        if n == 0:
            raise ValueError("problem has no variables")
        if self.A_eq.shape[1] != n or self.A_in.shape[1] != n:
            raise ValueError("constraint matrices do not match the number of variables")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("variable bounds have the wrong length")
        if len(self.in_labels) != self.A_in.shape[0]:
            raise ValueError("one label per inequality row is required")
        for blk in self.soc_blocks:
            if blk.F.shape[1] != n or blk.d.size != n or blk.g.size != blk.F.shape[0]:
                raise ValueError(f"SOC block {blk.label!r} has inconsistent dimensions")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_in, self.b_in):
            if not np.all(np.isfinite(arr)):
                raise ValueError("problem data contains non-finite entries")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("NaN variable bound")

    def slacks(self, x: np.ndarray) -> dict:
        """Constraint slacks at ``x`` (non-negative means satisfied)."""
        return {
            "eq": self.b_eq - self.A_eq @ x,
            "in": self.b_in - self.A_in @ x,
            "lb": x - self.lb,
            "ub": self.ub - x,
            "soc": np.array([blk.slack(x) for blk in self.soc_blocks]),
        }

    def max_violation(self, x: np.ndarray) -> float:
        sl = self.slacks(x)
        worst = 0.0
        if sl["eq"].size:
            worst = max(worst, float(np.max(np.abs(sl["eq"]))))
        for key in ("in", "lb", "ub", "soc"):
            v = sl[key]
            v = v[np.isfinite(v)]
            if v.size:
                worst = max(worst, float(-np.min(v)))
        return worst

    def to_json(self) -> str:
        def arr(a):
            return np.where(np.isfinite(a), a, np.sign(a) * 1e300).tolist() if a.ndim else float(a)

        return json.dumps({
            "c": self.c.tolist(),
            "A_eq": self.A_eq.tolist(), "b_eq": self.b_eq.tolist(),
            "A_in": self.A_in.tolist(), "b_in": self.b_in.tolist(),
            "lb": arr(self.lb), "ub": arr(self.ub),
            "in_labels": list(self.in_labels), "eq_labels": list(self.eq_labels),
            "soc": [{"F": b.F.tolist(), "g": b.g.tolist(), "d": b.d.tolist(), "h": b.h,
                     "label": b.label} for b in self.soc_blocks],
        })

    @classmethod
    def from_json(cls, text: str) -> "ConicProblem":
        doc = json.loads(text)

        def bound(v):
            a = np.asarray(v, dtype=float)
            a[a >= 1e300] = np.inf
            a[a <= -1e300] = -np.inf
            return a

        n = len(doc["c"])
        return cls(
            c=doc["c"],
            A_eq=np.asarray(doc["A_eq"], dtype=float).reshape(-1, n), b_eq=doc["b_eq"],
            A_in=np.asarray(doc["A_in"], dtype=float).reshape(-1, n), b_in=doc["b_in"],
            lb=bound(doc["lb"]), ub=bound(doc["ub"]),
            in_labels=doc["in_labels"], eq_labels=doc["eq_labels"],
            soc_blocks=[SocBlock(np.asarray(b["F"], dtype=float).reshape(-1, n), b["g"], b["d"], b["h"],
                                 b["label"]) for b in doc["soc"]],
        )


def _as_rows(A, b, n):
    if A is None or np.size(A) == 0:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[0] != b.size:
        raise ValueError("row count of constraint matrix and right-hand side differ")
    return A, b


@dataclass
class Solution:
    status: str
    x: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    y: np.ndarray = field(default=None, repr=False)
    z_in: np.ndarray = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


# --------------------------------------------------------------------------
# cone helpers; a cone vector is laid out as [orthant (l) | soc_1 | soc_2 ...]
# --------------------------------------------------------------------------

class _Cone:
    """Nonnegative orthant of size ``l`` followed by second-order cones.

    Cones of equal dimension are stored as index groups so every cone
    operation is a handful of vectorized numpy calls.
    """

    def __init__(self, l: int, q: list):
        self.l = l
        self.q = list(q)
        self.m = l + sum(self.q)
        self.degree = l + len(self.q)
        # runs of equal-size cones: (start, n_blocks, k); a run is a
        # contiguous slice, so block views are plain reshapes
        self.groups = []
        start = l
        for k in self.q:
            if self.groups and self.groups[-1][2] == k:
                st, nb, _ = self.groups[-1]
                self.groups[-1] = (st, nb + 1, k)
            else:
                self.groups.append((start, 1, k))
            start += k

    @staticmethod
    def view(u, grp):
        st, nb, k = grp
        return u[st: st + nb * k].reshape((nb, k) + u.shape[1:])

    def identity(self):
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for grp in self.groups:
            self.view(e, grp)[:, 0] = 1.0
        return e

    def jprod(self, u, v):
        w = np.empty(self.m)
        w[: self.l] = u[: self.l] * v[: self.l]
        for grp in self.groups:
            a, b, o = self.view(u, grp), self.view(v, grp), self.view(w, grp)
            o[:, 0] = np.einsum("ij,ij->i", a, b)
            o[:, 1:] = a[:, :1] * b[:, 1:] + b[:, :1] * a[:, 1:]
        return w

    def jdiv(self, lam, r):
        """Solve ``lam o x = r`` for x."""
        x = np.empty(self.m)
        x[: self.l] = r[: self.l] / lam[: self.l]
        for grp in self.groups:
            a, b, o = self.view(lam, grp), self.view(r, grp), self.view(x, grp)
            det = a[:, 0] ** 2 - np.einsum("ij,ij->i", a[:, 1:], a[:, 1:])
            x0 = (a[:, 0] * b[:, 0] - np.einsum("ij,ij->i", a[:, 1:], b[:, 1:])) / det
            o[:, 0] = x0
            o[:, 1:] = (b[:, 1:] - x0[:, None] * a[:, 1:]) / a[:, :1]
        return x

    def max_step(self, u, d):
        """Largest alpha with u + alpha*d in the cone (u interior)."""
        alpha = np.inf
        dl = d[: self.l]
        neg = dl < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-u[: self.l][neg] / dl[neg])))
        for grp in self.groups:
            a, b = self.view(u, grp), self.view(d, grp)
            nrm = np.sqrt(np.maximum(a[:, 0] ** 2 - np.sum(a[:, 1:] ** 2, axis=1), 1e-300))
            ab = a / nrm[:, None]
            rho0 = (ab[:, 0] * b[:, 0] - np.sum(ab[:, 1:] * b[:, 1:], axis=1)) / nrm
            factor = (rho0 + b[:, 0] / nrm) / (ab[:, 0] + 1.0)
            rho1 = b[:, 1:] / nrm[:, None] - factor[:, None] * ab[:, 1:]
            t = np.linalg.norm(rho1, axis=1) - rho0
            if np.any(t > 0):
                alpha = min(alpha, float(1.0 / t.max()))
        return alpha

    def interior_margin(self, u):
        """min over blocks of the smallest Jordan eigenvalue."""
        vals = [np.min(u[: self.l])] if self.l else []
        for grp in self.groups:
            a = self.view(u, grp)
            vals.append(np.min(a[:, 0] - np.linalg.norm(a[:, 1:], axis=1)))
        return min(vals) if vals else np.inf


class _NTScaling:
    """Nesterov-Todd scaling W (symmetric) with W z = W^{-1} s = lam."""

    def __init__(self, cone: _Cone, s, z):
        self.cone = cone
        self.d = np.sqrt(s[: cone.l] / z[: cone.l])
        self.blocks = []
        for grp in cone.groups:
            sb, zb = cone.view(s, grp), cone.view(z, grp)
            sn = np.sqrt(np.maximum(sb[:, 0] ** 2 - np.sum(sb[:, 1:] ** 2, axis=1), 1e-300))
            zn = np.sqrt(np.maximum(zb[:, 0] ** 2 - np.sum(zb[:, 1:] ** 2, axis=1), 1e-300))
            sbar, zbar = sb / sn[:, None], zb / zn[:, None]
            gamma = np.sqrt(np.maximum((1.0 + np.sum(sbar * zbar, axis=1)) / 2.0, 1e-300))
            w = sbar.copy()
            w[:, 0] += zbar[:, 0]
            w[:, 1:] -= zbar[:, 1:]
            w /= 2.0 * gamma[:, None]
            self.blocks.append((w, np.sqrt(sn / zn)))

    def apply(self, v, inverse=False):
        out = np.empty_like(v)
        l = self.cone.l
        if v.ndim == 1:
            out[:l] = v[:l] / self.d if inverse else v[:l] * self.d
        else:
            out[:l] = v[:l] / self.d[:, None] if inverse else v[:l] * self.d[:, None]
        sign = -1.0 if inverse else 1.0
        for grp, (w, beta) in zip(self.cone.groups, self.blocks):
            V = self.cone.view(v, grp)           # (nb, k) or (nb, k, ncol)
            O = self.cone.view(out, grp)
            scale = 1.0 / beta if inverse else beta
            if V.ndim == 2:
                w0, w1 = w[:, 0], w[:, 1:]
                v0, v1 = V[:, 0], V[:, 1:]
                dot = np.einsum("ij,ij->i", w1, v1)
                O[:, 0] = (w0 * v0 + sign * dot) * scale
                O[:, 1:] = (v1 + w1 * (dot / (1.0 + w0) + sign * v0)[:, None]) * scale[:, None]
            else:
                w0, w1 = w[:, 0, None], w[:, 1:]
                v0, v1 = V[:, 0], V[:, 1:]
                dot = np.einsum("ij,ijc->ic", w1, v1)
                O[:, 0] = (w0 * v0 + sign * dot) * scale[:, None]
                O[:, 1:] = (v1 + w1[:, :, None] * (dot / (1.0 + w0) + sign * v0)[:, None, :]) \
                    * scale[:, None, None]
        return out


# --------------------------------------------------------------------------
# presolve: fixed variables, empty rows, bounds -> rows, row normalization
# --------------------------------------------------------------------------

@dataclass
class _Standard:
    c: np.ndarray          # minimize c @ x
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    cone: _Cone
    free_idx: np.ndarray
    x_fixed: np.ndarray
    obj_offset: float
    in_map: np.ndarray     # position of each original A_in row in G (or -1)
    in_scale: np.ndarray


def _presolve(p: ConicProblem):
    n = p.n
    lb, ub = p.lb, p.ub
    if np.any(lb > ub + _FIXED_TOL):
        return None, "variable lower bound above upper bound"
    fixed = np.abs(ub - lb) <= _FIXED_TOL * np.maximum(1.0, np.abs(lb))
    fixed &= np.isfinite(lb)
    free = np.flatnonzero(~fixed)
    x_fixed = np.where(fixed, lb, 0.0)
    if free.size == 0:
        return None, "all variables fixed"

    c = -p.c[free]
    offset = float(p.c @ x_fixed)

    A = p.A_eq[:, free]
    b = p.b_eq - p.A_eq @ x_fixed
    keep = np.any(A != 0.0, axis=1)
    if np.any(np.abs(b[~keep]) > 1e-9 * (1 + np.abs(p.b_eq[~keep]))):
        return None, "empty equality row with nonzero right-hand side"
    A, b = A[keep], b[keep]
    # row normalization of equalities
    if A.shape[0]:
        rn = np.linalg.norm(A, axis=1)
        A = A / rn[:, None]
        b = b / rn

    rows, rhs, scales = [], [], []
    in_map = np.full(p.A_in.shape[0], -1)
    Ain = p.A_in[:, free]
    bin_ = p.b_in - p.A_in @ x_fixed
    for i in range(Ain.shape[0]):
        r = Ain[i]
        nrm = np.linalg.norm(r)
        if nrm == 0.0:
            if bin_[i] < -1e-9 * (1 + abs(p.b_in[i])):
                return None, f"empty inequality row {p.in_labels[i]!r} is violated"
            continue
        in_map[i] = len(rows)
        rows.append(r / nrm)
        rhs.append(bin_[i] / nrm)
        scales.append(nrm)
    for j_new, j in enumerate(free):
        if np.isfinite(ub[j]):
            r = np.zeros(free.size)
            r[j_new] = 1.0
            rows.append(r)
            rhs.append(ub[j])
            scales.append(1.0)
        if np.isfinite(lb[j]):
            r = np.zeros(free.size)
            r[j_new] = -1.0
            rows.append(r)
            rhs.append(-lb[j])
            scales.append(1.0)
    l = len(rows)
    q = []
    # equal-size cones adjacent: the cone routines work on contiguous runs
    for blk in sorted(p.soc_blocks, key=lambda b: b.F.shape[0]):
        F = blk.F[:, free]
        g = blk.g + blk.F @ x_fixed
        d = blk.d[free]
        h = blk.h + blk.d @ x_fixed
        if not np.any(F) and not np.any(d):
            if h < np.linalg.norm(g) - 1e-9 * (1 + abs(h)):
                return None, f"constant SOC block {blk.label!r} is violated"
            continue
        scale = max(np.linalg.norm(d), np.max(np.linalg.norm(F, axis=1)) if F.size else 0.0, 1e-12)
        rows.append(-d / scale)
        rhs.append(h / scale)
        for k in range(F.shape[0]):
            rows.append(-F[k] / scale)
            rhs.append(g[k] / scale)
        q.append(1 + F.shape[0])
    G = np.array(rows).reshape(-1, free.size)
    h = np.array(rhs, dtype=float)
    return _Standard(c, A, b, G, h, _Cone(l, q), free, x_fixed, offset, in_map,
                     np.array(scales[: l])), None


# --------------------------------------------------------------------------
# homogeneous self-dual interior point iteration
# --------------------------------------------------------------------------

def _kkt_factory(A, G, W: _NTScaling):
    n = G.shape[1]
    p = A.shape[0]
    Gs = W.apply(G, inverse=True)
    H = Gs.T @ Gs
    K = np.zeros((n + p, n + p))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    # tiny static regularization; refined away below
    reg = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(H))))) if n else 0.0
    Kr = K.copy()
    Kr[np.arange(n), np.arange(n)] += reg
    Kr[n + np.arange(p), n + np.arange(p)] -= reg
    lu = sla.lu_factor(Kr, check_finite=False)

    def reduced(bx, by, bz):
        wbz = W.apply(bz, inverse=True)
        rhs = np.concatenate([bx + Gs.T @ wbz, by])
        sol = sla.lu_solve(lu, rhs, check_finite=False)
        res = rhs - K @ sol
        sol = sol + sla.lu_solve(lu, res, check_finite=False)
        dx, dy = sol[:n], sol[n:]
        dz = W.apply(Gs @ dx - wbz, inverse=True)
        return dx, dy, dz

    def solve(bx, by, bz):
        # refine against the unreduced system [0 A' G'; A 0 0; G 0 -W^2]
        dx, dy, dz = reduced(bx, by, bz)
        scale = 1.0 + max(np.abs(bx).max(initial=0), np.abs(by).max(initial=0), np.abs(bz).max(initial=0))
        for _ in range(_REFINE):
            r1 = bx - A.T @ dy - G.T @ dz
            r2 = by - A @ dx
            r3 = bz - G @ dx + W.apply(W.apply(dz))
            res = max(np.abs(r1).max(initial=0), np.abs(r2).max(initial=0), np.abs(r3).max(initial=0))
            if res <= 1e-14 * scale:
                break
            ex, ey, ez = reduced(r1, r2, r3)
            dx, dy, dz = dx + ex, dy + ey, dz + ez
        return dx, dy, dz

    return solve


def _hsd(st: _Standard, tol: float, max_iter: int):
    c, A, b, G, h, cone = st.c, st.A, st.b, st.G, st.h, st.cone
    n, p, m = c.size, A.shape[0], G.shape[0]
    x = np.zeros(n)
    y = np.zeros(p)
    s = cone.identity()
    z = cone.identity()
    tau, kappa = 1.0, 1.0
    nb, nh, nc = max(1.0, np.linalg.norm(b)), max(1.0, np.linalg.norm(h)), max(1.0, np.linalg.norm(c))
    deg = cone.degree
    best = None
    since_best = 0
    status = MAX_ITER
    it = 0
    info = {}

    for it in range(max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = s + G @ x - h * tau
        rt = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / (deg + 1)

        cx, by_hz = c @ x, b @ y + h @ z
        pcost, dcost = cx / tau, -by_hz / tau
        pres = max(np.linalg.norm(ry) / tau / nb, np.linalg.norm(rz) / tau / nh) if m + p else 0.0
        dres = np.linalg.norm(rx) / tau / nc
        compl = s @ z / tau ** 2
        relgap = max(abs(pcost - dcost), compl) / (1.0 + min(abs(pcost), abs(dcost)))
        info = dict(pres=pres, dres=dres, gap=relgap)
        score = max(pres, dres, relgap)
        if best is None or score < best[0]:
            best = (score, x / tau, y / tau, z / tau, dict(info))
            since_best = 0
        else:
            since_best += 1
            if (best[0] <= tol and since_best >= _STALL) or since_best >= 5 * _STALL \
                    or not np.isfinite(score):
                break
        if score <= tol * _POLISH:
            status = OPTIMAL
            break
        # infeasibility certificates
        if by_hz < 0 and np.linalg.norm(A.T @ y + G.T @ z) / nc <= tol * -by_hz:
            status = INFEASIBLE
            break
        if cx < 0 and max(np.linalg.norm(A @ x) / nb, np.linalg.norm(G @ x + s) / nh) <= tol * -cx:
            status = UNBOUNDED
            break
        if it == max_iter:
            break

        W = _NTScaling(cone, s, z)
        lam = W.apply(z)
        kkt = _kkt_factory(A, G, W)
        x1, y1, z1 = kkt(-c, b, h)
        den = c @ x1 + b @ y1 + h @ z1 - kappa / tau

        def direction(eta, rc, rk):
            lr = cone.jdiv(lam, rc)
            x2, y2, z2 = kkt(-eta * rx, -eta * ry, -eta * rz - W.apply(lr))
            dtau = (-eta * rt - rk / tau - (c @ x2 + b @ y2 + h @ z2)) / den
            dx, dy, dz = x2 + dtau * x1, y2 + dtau * y1, z2 + dtau * z1
            ws = lr - W.apply(dz)            # W^{-1} ds
            ds = W.apply(ws)
            dkappa = (rk - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa, ws

        def step_length(dz, ds, dtau, dkappa):
            a = min(cone.max_step(s, ds), cone.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        lamlam = cone.jprod(lam, lam)
        dxa, dya, dza, dsa, dta, dka, wsa = direction(1.0, -lamlam, -tau * kappa)
        aa = min(1.0, step_length(dza, dsa, dta, dka))
        sigma = (1.0 - aa) ** 3
        e = cone.identity()
        rc = sigma * mu * e - lamlam - cone.jprod(wsa, W.apply(dza))
        rk = sigma * mu - tau * kappa - dta * dka
        dx, dy, dz, ds, dt, dk, _ = direction(1.0 - sigma, rc, rk)
        alpha = min(1.0, _STEP_FRACTION * step_length(dz, ds, dt, dk))
        if not np.isfinite(alpha) or alpha < 1e-12:
            break
        x, y, z, s = x + alpha * dx, y + alpha * dy, z + alpha * dz, s + alpha * ds
        tau, kappa = tau + alpha * dt, kappa + alpha * dk
        # keep the embedding well scaled
        if tau > 1e8 or tau < 1e-8:
            scale = 1.0 / tau
            x, y, z, s, kappa, tau = x * scale, y * scale, z * scale, s * scale, kappa * scale, 1.0

    if status in (INFEASIBLE, UNBOUNDED):
        return status, x, y, z, info, it
    # iterate past tol when possible; accept the best iterate once it meets tol
    score, xb, yb, zb, ib = best
    return (OPTIMAL if score <= tol else MAX_ITER), xb, yb, zb, ib, it


def solve(problem: ConicProblem, tol: float = 1e-8, max_iter: int = 100) -> Solution:
    """Maximize ``problem.c @ x`` over the problem's constraints.

    Returns a :class:`Solution`; ``status`` is one of ``optimal``,
    ``infeasible``, ``unbounded`` or ``max_iter`` (best iterate returned).
    """
    problem.validate()
    st, err = _presolve(problem)
    n = problem.n
    if st is None:
        if err == "all variables fixed":
            x = np.where(np.isfinite(problem.lb), problem.lb, 0.0)
            feasible = problem.max_violation(x) <= 1e-9
            return Solution(OPTIMAL if feasible else INFEASIBLE, x, float(problem.c @ x),
                            problem.max_violation(x), 0.0, 0.0, 0)
        return Solution(INFEASIBLE, np.full(n, np.nan), np.nan, np.inf, np.inf, np.inf, 0)

    # iterating past tol can drive late iterates to overflow; those are
    # discarded by the finiteness check and the best iterate is kept
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        status, xs, ys, zs, info, it = _hsd(st, tol, max_iter)
    x = st.x_fixed.copy()
    x[st.free_idx] = xs
    z_in = np.zeros(problem.A_in.shape[0])
    mapped = st.in_map >= 0
    z_in[mapped] = zs[st.in_map[mapped]] / st.in_scale[st.in_map[mapped]]
    obj = float(problem.c @ x) if status in (OPTIMAL, MAX_ITER) else np.nan
    return Solution(status, x, obj, info.get("pres", np.nan), info.get("dres", np.nan),
                    info.get("gap", np.nan), it, y=ys, z_in=z_in)
