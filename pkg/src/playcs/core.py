"""Domain types and the Kalman prediction/update primitives."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
COND_WARN = 1e12


class DimensionError(ValueError):
    """Raised when array shapes of a model do not agree."""


class SingularCovarianceError(np.linalg.LinAlgError):
    """Raised when a covariance that must be invertible is not."""


def hermitian_part(P):
    return 0.5 * (P + P.conj().T)


def psd_repair(P, tol=PSD_TOL):
    """Symmetrize ``P`` and clamp tiny negative eigenvalues to zero.

    Eigenvalues below ``-tol`` mean something upstream is broken, so they
    raise instead of being patched.
    """
    P = hermitian_part(P)
    if P.size == 0:
        return P
    evals, evecs = np.linalg.eigh(P)
    lo = evals.min()
    if lo < -tol * max(1.0, np.abs(evals).max()):
        raise SingularCovarianceError(
            f"covariance has eigenvalue {lo:.3e} below -{tol:g}")
    if lo < 0:
        evals = np.clip(evals, 0.0, None)
        P = hermitian_part((evecs * evals) @ evecs.conj().T)
    return P


@dataclass(frozen=True)
class SupportSet:
    """Sorted set of active coordinate indices in ``[0, ambient_dim)``."""

    indices: np.ndarray
    ambient_dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).ravel()
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0
                         or idx[-1] >= self.ambient_dim):
            idx = np.unique(idx)
            if idx.size and (idx[0] < 0 or idx[-1] >= self.ambient_dim):
                raise ValueError("support index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def empty(cls, n):
        return cls(np.empty(0, dtype=np.intp), n)

    @classmethod
    def full(cls, n):
        return cls(np.arange(n), n)

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        return cls(np.flatnonzero(mask), mask.size)

    @property
    def mask(self):
        m = np.zeros(self.ambient_dim, dtype=bool)
        m[self.indices] = True
        return m

    def complement(self):
        return SupportSet(np.flatnonzero(~self.mask), self.ambient_dim)

    def union(self, other):
        if other.ambient_dim != self.ambient_dim:
            raise DimensionError("supports live in different dimensions")
        return SupportSet.from_mask(self.mask | other.mask)

    def __len__(self):
        return int(self.indices.size)

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, i):
        return bool(np.any(self.indices == i))

    def __eq__(self, other):
        if not isinstance(other, SupportSet):
            return NotImplemented
        return (self.ambient_dim == other.ambient_dim
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.ambient_dim, self.indices.tobytes()))

    def __repr__(self):
        return f"SupportSet({self.indices.tolist()}, n={self.ambient_dim})"


@dataclass(frozen=True)
class GaussianBelief:
    """Posterior mean and covariance of the signal at one slot."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=complex).ravel()
        cov = np.asarray(self.cov, dtype=complex)
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(
                f"cov shape {cov.shape} does not match mean of length {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n(self):
        return self.mean.size


@dataclass(frozen=True)
class MeasurementModel:
    """Linear measurement ``y = A x + n`` with ``n ~ CN(0, R)``."""

    A: np.ndarray
    R: np.ndarray | None = None
    noise_var: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        m, n = A.shape
        if m > n:
            raise DimensionError(f"expected M <= N, got A of shape {A.shape}")
        if self.R is None:
            R = self.noise_var * np.eye(m, dtype=complex)
        else:
            R = np.atleast_2d(np.asarray(self.R, dtype=complex))
        if R.shape != (m, m):
            raise DimensionError(f"R must be {m}x{m}, got {R.shape}")
        if np.abs(R - R.conj().T).max(initial=0.0) > HERMITIAN_TOL * max(1.0, np.abs(R).max(initial=0.0)):
            raise ValueError("R must be Hermitian")
        if m and np.linalg.eigvalsh(R).min() <= 0:
            raise SingularCovarianceError("R must be positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R", R)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def precision(self):
        """Return ``R^{-1}`` via a Cholesky solve."""
        c = linalg.cho_factor(self.R)
        return hermitian_part(linalg.cho_solve(c, np.eye(self.m, dtype=complex)))


@dataclass(frozen=True)
class DynamicsModel:
    """Linear dynamics ``x_t = F x_{t-1} + v`` with ``v ~ CN(0, Q)``."""

    n: int
    F: np.ndarray | None = None
    Q: np.ndarray | None = None
    process_var: float = 0.0

    def __post_init__(self):
        n = int(self.n)
        F = np.eye(n, dtype=complex) if self.F is None else np.asarray(self.F, dtype=complex)
        Q = (self.process_var * np.eye(n, dtype=complex) if self.Q is None
             else np.asarray(self.Q, dtype=complex))
        if F.shape != (n, n) or Q.shape != (n, n):
            raise DimensionError("F and Q must both be n x n")
        if np.abs(Q - Q.conj().T).max(initial=0.0) > HERMITIAN_TOL:
            raise ValueError("Q must be Hermitian")
        if n and np.linalg.eigvalsh(Q).min() < -PSD_TOL:
            raise ValueError("Q must be positive semidefinite")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)

    @property
    def identity_transition(self):
        return np.array_equal(self.F, np.eye(self.n))


@dataclass(frozen=True)
class LsmPrior:
    """Gamma(a, b) prior on the Laplacian inverse scales (shape ``a``, rate ``b``)."""

    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"LSM prior needs a > 0 and b > 0, got a={self.a}, b={self.b}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("LSM prior parameters must be finite")


def predict(belief: GaussianBelief, dyn: DynamicsModel) -> GaussianBelief:
    """Kalman time update: ``(F x, F P F^H + Q)``."""
    if belief.n != dyn.n:
        raise DimensionError(f"belief has dimension {belief.n}, dynamics {dyn.n}")
    if dyn.identity_transition:
        mean = belief.mean.copy()
        cov = belief.cov + dyn.Q
    else:
        mean = dyn.F @ belief.mean
        cov = dyn.F @ belief.cov @ dyn.F.conj().T + dyn.Q
    return GaussianBelief(mean, hermitian_part(cov))


def kalman_gain(P, A, R):
    """Return ``K = P A^H (A P A^H + R)^{-1}`` without forming the inverse."""
    S = hermitian_part(A @ P @ A.conj().T + R)
    if S.size == 0:
        return np.zeros((P.shape[0], 0), dtype=complex)
    evals = np.linalg.eigvalsh(S)
    if evals.min() <= 0:
        raise SingularCovarianceError("innovation covariance is singular")
    if evals.max() / evals.min() > COND_WARN:
        warnings.warn(
            f"innovation covariance is ill-conditioned (cond={evals.max() / evals.min():.2e})",
            RuntimeWarning, stacklevel=2)
    try:
        c = linalg.cho_factor(S)
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError("innovation covariance is singular") from exc
    # K^H = S^{-1} A P  (S, P Hermitian)
    return linalg.cho_solve(c, A @ P).conj().T


def posterior_cov(P, K, A):
    """``(I - K A) P``, symmetrized and PSD-repaired."""
    return psd_repair(P - K @ (A @ P))


def kf_update(pred: GaussianBelief, y, meas: MeasurementModel) -> GaussianBelief:
    """Kalman measurement update of the predicted belief."""
    y = np.asarray(y, dtype=complex).ravel()
    if meas.n != pred.n or y.size != meas.m:
        raise DimensionError(
            f"A is {meas.A.shape}, belief has dim {pred.n}, y has length {y.size}")
    K = kalman_gain(pred.cov, meas.A, meas.R)
    mean = pred.mean + K @ (y - meas.A @ pred.mean)
    return GaussianBelief(mean, posterior_cov(pred.cov, K, meas.A))


def estimate_support(x, threshold: float, mode: str = "absolute") -> SupportSet:
    """Indices whose modulus exceeds ``threshold``.

    In ``"relative"`` mode the cutoff is ``threshold * max|x|``.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    mag = np.abs(np.asarray(x).ravel())
    if mode == "absolute":
        cut = threshold
    elif mode == "relative":
        peak = mag.max(initial=0.0)
        if peak == 0:
            return SupportSet.empty(mag.size)
        cut = threshold * peak
    else:
        raise ValueError(f"unknown support mode {mode!r}")
    return SupportSet(np.flatnonzero(mag > cut), mag.size)
