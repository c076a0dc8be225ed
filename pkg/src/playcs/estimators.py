"""scikit-learn style front end for the trackers.

>>> tracker = SparseTracker(kind="play_plus_cs", sigma_m=0.01, b=0.01)
>>> X_hat = tracker.fit_transform(Y, A)          # doctest: +SKIP

``Y`` holds one measurement vector per row (``T x M``) and ``A`` is either a
single ``M x N`` operator shared by every slot or a ``T x M x N`` stack.
"""

from __future__ import annotations

import copy

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import LsmPrior, MeasurementModel
from .solver import SolverOptions
from .metrics import metric_series
from .trackers import TrackerKind, TrackerParams, track, tracker_models


def check_operators(A, n_slots, n_meas=None):
    """Validate ``A`` and broadcast it to a ``(T, M, N)`` complex stack."""
    A = np.asarray(A)
    if A.ndim == 2:
        A = np.broadcast_to(A, (n_slots,) + A.shape)
    if A.ndim != 3:
        raise ValueError(f"A must be 2-D or 3-D, got shape {A.shape}")
    if A.shape[0] != n_slots:
        raise ValueError(f"A has {A.shape[0]} slots but Y has {n_slots}")
    if n_meas is not None and A.shape[1] != n_meas:
        raise ValueError(f"A has {A.shape[1]} rows but Y has {n_meas} columns")
    if A.shape[1] > A.shape[2]:
        raise ValueError("expected an undersampled operator (M <= N)")
    if not np.all(np.isfinite(A)):
        raise ValueError("A contains NaN or infinity")
    return A.astype(complex, copy=False)


def check_measurements(Y):
    """Coerce ``Y`` to a 2-D complex array of shape ``(T, M)``."""
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[np.newaxis, :]
    if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
        raise ValueError(f"Y must be a nonempty (T, M) array, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y contains NaN or infinity")
    return Y.astype(complex, copy=False)


class SparseTracker(TransformerMixin, BaseEstimator):
    """Causal sparse-sequence tracker.

    Parameters
    ----------
    kind : str, default="play_plus_cs"
        One of the :class:`~playcs.trackers.TrackerKind` values.
    gamma : float, default=1.0
        Weight of the support quadratic term.
    alpha : float, default=0.1
        Support threshold (absolute, or relative to ``max|x|``).
    support_mode : {"absolute", "relative"}, default="absolute"
    a, b : float, default=1.0, 0.01
        Gamma prior shape and rate for the learned l1 weights.
    lam : float or None, default=None
        l1 scale for the baselines; ``None`` picks ``0.01 * ||A^H y||_inf``.
    em_iters, em_tol : int, float
        EM budget for ``play_plus_cs``.
    rwl1_epsilon : float, default=1e-3
    sigma_f : float, default=0.05
        Process-noise standard deviation.
    sigma_m : float, default=1.0
        Measurement-noise standard deviation.
    weights : array-like or None
        Fixed l1 weights (required by ``play_cs``).
    max_iters, rel_tol, kkt_tol : solver budget.

    Attributes
    ----------
    estimates_ : ndarray of shape (T, N)
    state_ : TrackerState
        Belief and support after the last slot, used by ``partial_fit``.
    n_features_in_ : int
        Signal dimension N.
    """

    def __init__(self, kind="play_plus_cs", gamma=1.0, alpha=0.1, support_mode="absolute",
                 a=1.0, b=0.01, lam=None, em_iters=5, em_tol=1e-6, rwl1_epsilon=1e-3,
                 sigma_f=0.05, sigma_m=1.0, weights=None, max_iters=2000, rel_tol=1e-8,
                 kkt_tol=1e-6):
        self.kind = kind
        self.gamma = gamma
        self.alpha = alpha
        self.support_mode = support_mode
        self.a = a
        self.b = b
        self.lam = lam
        self.em_iters = em_iters
        self.em_tol = em_tol
        self.rwl1_epsilon = rwl1_epsilon
        self.sigma_f = sigma_f
        self.sigma_m = sigma_m
        self.weights = weights
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.kkt_tol = kkt_tol

    def tracker_params(self) -> TrackerParams:
        return TrackerParams(
            kind=TrackerKind(self.kind), gamma=self.gamma, alpha=self.alpha,
            support_mode=self.support_mode, lsm=LsmPrior(self.a, self.b), lam=self.lam,
            em_iters=self.em_iters, em_tol=self.em_tol, rwl1_epsilon=self.rwl1_epsilon,
            sigma_f=self.sigma_f, sigma_m=self.sigma_m, weights=self.weights,
            solver=SolverOptions(self.max_iters, self.rel_tol, self.kkt_tol))

    def _run(self, Y, A, state):
        Y = check_measurements(Y)
        A = check_operators(A, Y.shape[0], Y.shape[1])
        params = self.tracker_params()
        ops = [MeasurementModel(a, noise_var=params.sigma_m ** 2) for a in A]
        return track(params.kind, Y, ops, params, state)

    def fit(self, Y, A):
        """Track the whole sequence from the initial state."""
        est, state = self._run(Y, A, None)
        self.estimates_ = est
        self.state_ = state
        self.n_features_in_ = est.shape[1]
        return self

    def partial_fit(self, Y, A):
        """Continue tracking from the current state with more slots."""
        if not hasattr(self, "state_"):
            return self.fit(Y, A)
        A_arr = np.asarray(A)
        if A_arr.shape[-1] != self.n_features_in_:
            raise ValueError(f"A has {A_arr.shape[-1]} columns, expected {self.n_features_in_}")
        est, state = self._run(Y, A, self.state_)
        self.estimates_ = np.vstack([self.estimates_, est])
        self.state_ = state
        return self

    def transform(self, Y, A):
        """Estimates for further slots, continuing from the fitted state.

        The estimator itself is left unchanged.
        """
        check_is_fitted(self, "state_")
        est, _ = self._run(Y, A, copy.copy(self.state_))
        return est

    def fit_transform(self, Y, A):
        return self.fit(Y, A).estimates_

    def predict(self, A):
        """One-step-ahead measurement prediction ``A x_{t+1|t}``."""
        check_is_fitted(self, "state_")
        A = np.asarray(A, dtype=complex)
        if A.shape[-1] != self.n_features_in_:
            raise ValueError(f"A has {A.shape[-1]} columns, expected {self.n_features_in_}")
        params = self.tracker_params()
        _, dyn = tracker_models(params, MeasurementModel(A, noise_var=1.0), self.n_features_in_)
        return A @ (dyn.F @ self.state_.estimate)

    def score(self, Y, A, X):
        """Negative time-averaged NMSE of ``transform(Y, A)`` against ``X``."""
        est = self.transform(Y, A)
        return -metric_series(self.kind, est, np.asarray(X)).tnmse

    def reset(self):
        for attr in ("estimates_", "state_", "n_features_in_"):
            self.__dict__.pop(attr, None)
        return self
