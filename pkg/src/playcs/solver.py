"""Proximal-gradient solver for the partial-Laplacian MAP subproblem.

The problem solved at every slot is

    min_x  ||y - A x||^2_{Rinv}
           + gamma * (x - p)_T^H  Wq  (x - p)_T
           + sum_{i not in T} w_i |x_i - p_i|

where ``p`` is the one-step prediction, ``T`` the carried-over support and
``Wq`` the inverse of the predicted covariance restricted to ``T``.
Gradients follow the Wirtinger convention ``g = 2 df/d(conj x)``, which is
the steepest-ascent direction of the real objective.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import DimensionError, SupportSet, hermitian_part

WEIGHT_CLIP = 1e12
QUAD_RIDGE = 1e-8
# PLAYCS_DEBUG=1 asserts monotonicity and the certificate on every solve
DEBUG = os.environ.get("PLAYCS_DEBUG", "") not in ("", "0")


class SolverError(ArithmeticError):
    """Raised when the objective becomes non-finite."""


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 2000
    rel_tol: float = 1e-8
    kkt_tol: float = 1e-6
    backtrack_factor: float = 0.5

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (self.rel_tol > 0 and self.kkt_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    final_objective: float
    kkt_residual: float
    converged: bool
    objective_trace: np.ndarray = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class MapProblem:
    """One instance of the per-slot convex MAP subproblem.

    ``quad_weight`` is ``|T| x |T|`` and ``l1_weights`` has one entry per
    coordinate of the complement of ``support`` (in increasing index order).
    """

    y: np.ndarray
    A: np.ndarray
    Rinv: np.ndarray
    support: SupportSet
    pred: np.ndarray
    gamma: float
    quad_weight: np.ndarray
    l1_weights: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex).ravel()
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        Rinv = np.atleast_2d(np.asarray(self.Rinv, dtype=complex))
        pred = np.asarray(self.pred, dtype=complex).ravel()
        m, n = A.shape
        k = len(self.support)
        if y.size != m or Rinv.shape != (m, m) or pred.size != n:
            raise DimensionError("y, A, Rinv and pred have inconsistent shapes")
        if self.support.ambient_dim != n:
            raise DimensionError("support dimension does not match A")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        Wq = np.asarray(self.quad_weight, dtype=complex).reshape(k, k)
        w = np.asarray(self.l1_weights, dtype=float).ravel()
        if w.size != n - k:
            raise DimensionError(f"need {n - k} l1 weights, got {w.size}")
        if np.any(~(w > 0)):
            raise ValueError("l1 weights must be positive")
        w = np.minimum(w, WEIGHT_CLIP)
        for name, val in (("y", y), ("A", A), ("Rinv", Rinv), ("pred", pred), ("quad_weight", Wq)):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Rinv", Rinv)
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "quad_weight", Wq)
        object.__setattr__(self, "l1_weights", w)

    @classmethod
    def from_prediction(cls, y, A, Rinv, support, pred, P_pred, gamma, l1_weights):
        """Build the problem with ``quad_weight = ((P_pred)_{T,T} + ridge*I)^{-1}``."""
        idx = support.indices
        Ptt = np.asarray(P_pred, dtype=complex)[np.ix_(idx, idx)]
        if idx.size:
            c = linalg.cho_factor(hermitian_part(Ptt) + QUAD_RIDGE * np.eye(idx.size))
            Wq = hermitian_part(linalg.cho_solve(c, np.eye(idx.size, dtype=complex)))
        else:
            Wq = np.zeros((0, 0), dtype=complex)
        return cls(y, A, Rinv, support, pred, gamma, Wq, l1_weights)

    @property
    def n(self):
        return self.A.shape[1]

    def full_weights(self):
        """Length-N weight vector, zero on the support."""
        w = np.zeros(self.n)
        w[~self.support.mask] = self.l1_weights
        return w


def smooth_objective(p: MapProblem, x) -> float:
    """Data-fit plus support-quadratic terms of the objective."""
    x = np.asarray(x, dtype=complex).ravel()
    r = p.y - p.A @ x
    val = np.real(r.conj() @ (p.Rinv @ r))
    idx = p.support.indices
    if idx.size and p.gamma != 0:
        d = x[idx] - p.pred[idx]
        val += p.gamma * np.real(d.conj() @ (p.quad_weight @ d))
    return float(val)


def objective(p: MapProblem, x) -> float:
    x = np.asarray(x, dtype=complex).ravel()
    off = ~p.support.mask
    return smooth_objective(p, x) + float(np.sum(p.l1_weights * np.abs(x[off] - p.pred[off])))


def smooth_gradient(p: MapProblem, x):
    x = np.asarray(x, dtype=complex).ravel()
    g = 2.0 * (p.A.conj().T @ (p.Rinv @ (p.A @ x - p.y)))
    idx = p.support.indices
    if idx.size and p.gamma != 0:
        g[idx] += 2.0 * p.gamma * (p.quad_weight @ (x[idx] - p.pred[idx]))
    return g


def shrink(z, tau):
    """Complex soft-thresholding: ``z * max(|z| - tau, 0) / |z|``."""
    z = np.asarray(z, dtype=complex)
    mag = np.abs(z)
    scale = np.maximum(mag - tau, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(mag > 0, z * (scale / np.where(mag > 0, mag, 1.0)), 0.0)
    return out


def prox_shifted_weighted_l1(v, p: MapProblem, step: float):
    """Soft-threshold ``v`` toward the prediction outside the support."""
    if not step > 0:
        raise ValueError("step must be positive")
    out = np.array(v, dtype=complex).ravel()
    off = ~p.support.mask
    out[off] = p.pred[off] + shrink(out[off] - p.pred[off], step * p.l1_weights)
    return out


def _hessian(p: MapProblem):
    """Dense Hessian ``H`` and linear term ``c`` so that ``grad = H x - c``."""
    AhR = p.A.conj().T @ p.Rinv
    H = 2.0 * (AhR @ p.A)
    c = 2.0 * (AhR @ p.y)
    idx = p.support.indices
    if idx.size and p.gamma != 0:
        H[np.ix_(idx, idx)] += 2.0 * p.gamma * p.quad_weight
        c[idx] += 2.0 * p.gamma * (p.quad_weight @ p.pred[idx])
    return hermitian_part(H), c


def _power_norm(H, iters=30):
    n = H.shape[0]
    if n == 0 or not np.any(H):
        return 0.0
    v = np.ones(n, dtype=complex) + 1j * np.linspace(0.0, 1.0, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = H @ v
        lam = np.linalg.norm(u)
        if lam == 0:
            return 0.0
        v = u / lam
    return float(lam)


def lipschitz_estimate(p: MapProblem) -> float:
    """Power-iteration bound on the smooth gradient's Lipschitz constant."""
    H, _ = _hessian(p)
    lam = _power_norm(H)
    if lam == 0:
        return 1.0
    return 1.1 * lam


def optimality_residual(p: MapProblem, x) -> float:
    """Max-coordinate violation of the first-order optimality conditions."""
    x = np.asarray(x, dtype=complex).ravel()
    return _kkt(p, x, smooth_gradient(p, x))


def _kkt(p, x, g):
    res = np.abs(g)
    off = ~p.support.mask
    if np.any(off):
        d = x[off] - p.pred[off]
        go = g[off]
        w = p.l1_weights
        mag = np.abs(d)
        moving = mag > 0
        r_off = np.maximum(np.abs(go) - w, 0.0)
        unit = np.where(moving, d / np.where(moving, mag, 1.0), 0.0)
        r_off = np.where(moving, np.abs(go + w * unit), r_off)
        res[off] = r_off
    return float(res.max(initial=0.0))


def solve_map(p: MapProblem, opts: SolverOptions | None = None, x0=None):
    """Minimize the MAP objective by monotone accelerated proximal gradient.

    Starts from ``p.pred`` unless ``x0`` is given. Returns the minimizer and a
    :class:`SolverReport`; the objective is non-increasing over iterations.

    Stops when the relative iterate change falls below ``rel_tol`` and the
    optimality residual is within ``kkt_tol``, when no descent is left in
    floating point, or after ``max_iters``. Descent is judged from the
    objective change along the step, which stays accurate near the optimum
    where differences of absolute objective values cancel.
    """
    opts = opts or SolverOptions()
    H, c = _hessian(p)
    const = (np.real(p.y.conj() @ (p.Rinv @ p.y)))
    idx = p.support.indices
    if idx.size and p.gamma != 0:
        pt = p.pred[idx]
        const += p.gamma * np.real(pt.conj() @ (p.quad_weight @ pt))
    off = ~p.support.mask
    w = p.l1_weights
    pred_off = p.pred[off]

    def smooth(x, Hx):
        return 0.5 * np.real(x.conj() @ Hx) - np.real(c.conj() @ x) + const

    def nonsmooth(x):
        return float(np.sum(w * np.abs(x[off] - pred_off)))

    def prox(v, step):
        out = v.copy()
        out[off] = pred_off + shrink(v[off] - pred_off, step * w)
        return out

    x = p.pred.copy() if x0 is None else np.array(x0, dtype=complex).ravel()
    Hx = H @ x
    fx = smooth(x, Hx)
    Fx = fx + nonsmooth(x)
    if not np.isfinite(Fx):
        raise SolverError("non-finite objective at the starting point")
    trace = [Fx]
    if _kkt(p, x, Hx - c) <= opts.kkt_tol:
        return x, SolverReport(0, objective(p, x), _kkt(p, x, Hx - c), True, np.array(trace))

    def change(u, Hu):
        # F(u) - F(x) from the step itself; avoids cancellation near the optimum
        d = u - x
        ds = np.real(np.vdot(Hx - c, d)) + 0.5 * np.real(np.vdot(d, Hu - Hx))
        dn = np.sum(w * (np.abs(u[off] - pred_off) - np.abs(x[off] - pred_off)))
        return float(ds + dn)

    lam = _power_norm(H)
    L = 1.1 * lam if lam > 0 else 1.0
    x_prev, Hx_prev = x, Hx
    t = 1.0
    it = 0
    for it in range(1, opts.max_iters + 1):
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        z = x + beta * (x - x_prev)
        Hz = Hx + beta * (Hx - Hx_prev)
        u, Hu, fu, L = _prox_step(z, Hz, smooth(z, Hz), Hz - c, L, H, smooth, prox, opts)
        dF = change(u, Hu)
        if not np.isfinite(dF):
            raise SolverError("non-finite objective; check weights and conditioning")
        if dF <= 0:
            t = t_next
            # gradient restart: momentum points uphill
            if np.real(np.vdot(z - u, u - x)) > 0:
                t = 1.0
        else:
            t = 1.0
            u, Hu, fu, L = _prox_step(x, Hx, fx, Hx - c, L, H, smooth, prox, opts)
            dF = change(u, Hu)
            if not dF <= 0:
                # no representable descent left
                trace.append(Fx)
                break
        step_norm = np.linalg.norm(u - x)
        x_prev, Hx_prev = x, Hx
        x, Hx, fx, Fx = u, Hu, fu, min(Fx, Fx + dF)
        trace.append(Fx)
        if step_norm == 0:
            break
        if step_norm <= opts.rel_tol * max(np.linalg.norm(x), 1e-300):
            # small steps alone are not a certificate on ill-conditioned problems
            if _kkt(p, x, Hx - c) <= opts.kkt_tol:
                break
    kkt = _kkt(p, x, Hx - c)
    report = SolverReport(it, objective(p, x), kkt, kkt <= opts.kkt_tol, np.array(trace))
    if DEBUG:
        assert np.all(np.diff(report.objective_trace) <= 0), "objective increased"
        assert not report.converged or optimality_residual(p, x) <= opts.kkt_tol * (1 + 1e-6)
    return x, report


def _prox_step(z, Hz, fz, gz, L, H, smooth, prox, opts):
    """Backtracked proximal step from ``z``; returns the new point and ``L``."""
    while True:
        u = prox(z - gz / L, 1.0 / L)
        Hu = H @ u
        fu = smooth(u, Hu)
        d = u - z
        bound = fz + np.real(np.vdot(gz, d)) + 0.5 * L * np.real(np.vdot(d, d))
        if fu <= bound + 1e-12 * max(abs(bound), 1.0) or L > 1e300:
            return u, Hu, fu, L
        L /= opts.backtrack_factor
