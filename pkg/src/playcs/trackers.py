"""Recursive dynamic-CS trackers built on one MAP step.

Every algorithm here is a configuration of the same slot update: a Kalman
prediction, a convex MAP solve for the new estimate, a Kalman covariance
update and a thresholded support re-estimate. The baselines differ only in
how the MAP problem is degenerated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    DynamicsModel,
    GaussianBelief,
    LsmPrior,
    MeasurementModel,
    SupportSet,
    estimate_support,
    kalman_gain,
    kf_update,
    posterior_cov,
    predict,
)
from .solver import (
    WEIGHT_CLIP,
    MapProblem,
    SolverOptions,
    SolverReport,
    smooth_objective,
    solve_map,
)


class TrackerKind(str, enum.Enum):
    PLAY_CS = "play_cs"
    PLAY_PLUS_CS = "play_plus_cs"
    KALMAN_FILTER = "kalman_filter"
    REGULAR_CS = "regular_cs"
    MODIFIED_CS = "modified_cs"
    REGMOD_CS = "regmod_cs"
    WEIGHTED_L1_DF = "weighted_l1_df"
    KF_CS = "kf_cs"

    def __str__(self):
        return self.value


BASELINE_KINDS = frozenset({
    TrackerKind.REGULAR_CS,
    TrackerKind.MODIFIED_CS,
    TrackerKind.REGMOD_CS,
    TrackerKind.WEIGHTED_L1_DF,
    TrackerKind.KALMAN_FILTER,
})


class TrackingError(RuntimeError):
    """A slot update failed; ``slot`` holds the 1-based slot index."""

    def __init__(self, slot, cause):
        super().__init__(f"slot {slot}: {cause}")
        self.slot = slot


@dataclass(frozen=True)
class TrackerParams:
    """Scalars for every tracker.

    ``lam=None`` means the per-slot default ``0.01 * ||A^H y||_inf``.
    ``sigma_m=None`` takes the noise covariance from the dataset operators.
    ``weights`` are the fixed l1 weights (length N) needed by plain PLAY-CS.
    """

    kind: TrackerKind = TrackerKind.PLAY_PLUS_CS
    gamma: float = 1.0
    alpha: float = 0.1
    support_mode: str = "absolute"
    lsm: LsmPrior = field(default_factory=LsmPrior)
    lam: float | None = None
    em_iters: int = 5
    em_tol: float = 1e-6
    rwl1_epsilon: float = 1e-3
    sigma_f: float = 0.05
    sigma_m: float | None = None
    weights: np.ndarray | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        object.__setattr__(self, "kind", TrackerKind(self.kind))
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.support_mode not in ("absolute", "relative"):
            raise ValueError(f"unknown support_mode {self.support_mode!r}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.em_iters < 1 or not self.em_tol > 0:
            raise ValueError("em_iters must be >= 1 and em_tol > 0")
        if not self.rwl1_epsilon > 0:
            raise ValueError("rwl1_epsilon must be positive")
        if not self.sigma_f > 0:
            raise ValueError("sigma_f must be positive")
        if self.sigma_m is not None and not self.sigma_m > 0:
            raise ValueError("sigma_m must be positive")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if np.any(~(w > 0)):
                raise ValueError("weights must be positive")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class TrackerState:
    belief: GaussianBelief
    support: SupportSet
    slot: int = 0
    report: SolverReport | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.belief.n != self.support.ambient_dim:
            raise ValueError("belief and support dimensions differ")

    @property
    def estimate(self):
        return self.belief.mean


def init_state(n: int) -> TrackerState:
    """Zero mean, identity covariance, empty support."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    belief = GaussianBelief(np.zeros(n, dtype=complex), np.eye(n, dtype=complex))
    return TrackerState(belief, SupportSet.empty(n), 0)


def default_lambda(A, y):
    return 0.01 * float(np.abs(A.conj().T @ y).max(initial=0.0)) or 1e-12


def _lam(params, A, y):
    return params.lam if params.lam is not None else default_lambda(A, y)


def _support(x, params):
    return estimate_support(x, params.alpha, params.support_mode)


def _rinv(meas):
    return meas.precision()


def em_weights(x, pred, tcomp, prior: LsmPrior):
    """Posterior mean of the Laplacian inverse scales, ``(a+1)/(b+|x-pred|)``.

    ``tcomp`` selects the coordinates (index array, boolean mask or
    :class:`SupportSet`).
    """
    if isinstance(tcomp, SupportSet):
        tcomp = tcomp.indices
    d = np.abs(np.asarray(x).ravel()[tcomp] - np.asarray(pred).ravel()[tcomp])
    return np.minimum((prior.a + 1.0) / (prior.b + d), WEIGHT_CLIP)


def mm_objective(p: MapProblem, x, prior: LsmPrior) -> float:
    """Objective the EM iterations descend: the l1 term becomes a log penalty."""
    x = np.asarray(x, dtype=complex).ravel()
    smooth = smooth_objective(p, x)
    off = ~p.support.mask
    penalty = (prior.a + 1.0) * np.sum(np.log(prior.b + np.abs(x[off] - p.pred[off])))
    return float(smooth + penalty)


@dataclass(frozen=True)
class EmResult:
    x: np.ndarray
    weights: np.ndarray
    mm_trace: np.ndarray
    reports: tuple


def em_map(problem: MapProblem, prior: LsmPrior, em_iters=5, em_tol=1e-6,
           opts: SolverOptions | None = None) -> EmResult:
    """Alternate closed-form weight expectations with weighted MAP solves.

    ``problem.l1_weights`` is ignored; weights are learned starting from
    ``x = problem.pred``. Each M step warm-starts at the previous iterate,
    which keeps the log-penalty objective monotone.
    """
    tcomp = ~problem.support.mask
    x = problem.pred.copy()
    weights = em_weights(x, problem.pred, tcomp, prior)
    trace = [mm_objective(problem, x, prior)]
    reports = []
    for k in range(em_iters):
        weights = em_weights(x, problem.pred, tcomp, prior)
        p = replace(problem, l1_weights=weights)
        x_new, rep = solve_map(p, opts, x0=x)
        reports.append(rep)
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x_new), 1e-300)
        x = x_new
        trace.append(mm_objective(problem, x, prior))
        if change < em_tol:
            break
    return EmResult(x, weights, np.array(trace), tuple(reports))


def _finish(state, x, cov, support, report=None):
    return TrackerState(GaussianBelief(x, cov), support, state.slot + 1, report)


def step_play_cs(state, y, meas, dyn, params, weights):
    """One PLAY-CS slot with externally supplied l1 weights on ``T^c``.

    ``weights`` may have length ``|T^c|`` or ``N`` (then restricted to ``T^c``).
    """
    y = np.asarray(y, dtype=complex).ravel()
    pred = predict(state.belief, dyn)
    T = state.support
    K = kalman_gain(pred.cov, meas.A, meas.R)
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == T.ambient_dim:
        w = w[~T.mask]
    prob = MapProblem.from_prediction(
        y, meas.A, _rinv(meas), T, pred.mean, pred.cov, params.gamma, w)
    x, rep = solve_map(prob, params.solver)
    cov = posterior_cov(pred.cov, K, meas.A)
    return _finish(state, x, cov, _support(x, params), rep)


def step_play_plus_cs(state, y, meas, dyn, params):
    """One PLAY+-CS slot: PLAY-CS with l1 weights learned by EM."""
    y = np.asarray(y, dtype=complex).ravel()
    pred = predict(state.belief, dyn)
    T = state.support
    K = kalman_gain(pred.cov, meas.A, meas.R)
    n_off = T.ambient_dim - len(T)
    prob = MapProblem.from_prediction(
        y, meas.A, _rinv(meas), T, pred.mean, pred.cov, params.gamma, np.ones(n_off))
    em = em_map(prob, params.lsm, params.em_iters, params.em_tol, params.solver)
    cov = posterior_cov(pred.cov, K, meas.A)
    return _finish(state, em.x, cov, _support(em.x, params), em.reports[-1])


def baseline_problem(kind, state, y, A, params, pred_mean=None):
    """The degenerate MAP problem a baseline solves at this slot.

    All baselines use the unweighted data term (``Rinv = I``).
    """
    kind = TrackerKind(kind)
    n = A.shape[1]
    m = A.shape[0]
    pred_mean = state.belief.mean if pred_mean is None else pred_mean
    lam = _lam(params, A, y)
    eye_m = np.eye(m, dtype=complex)
    zeros = np.zeros(n, dtype=complex)
    if kind is TrackerKind.REGULAR_CS:
        T = SupportSet.empty(n)
        return MapProblem(y, A, eye_m, T, zeros, 0.0, np.zeros((0, 0)), np.full(n, lam))
    if kind is TrackerKind.MODIFIED_CS:
        T = state.support
        k = len(T)
        return MapProblem(y, A, eye_m, T, zeros, 0.0, np.zeros((k, k)), np.full(n - k, lam))
    if kind is TrackerKind.REGMOD_CS:
        T = state.support
        k = len(T)
        pred = zeros.copy()
        pred[T.indices] = pred_mean[T.indices]
        return MapProblem(y, A, eye_m, T, pred, params.gamma, np.eye(k), np.full(n - k, lam))
    if kind is TrackerKind.WEIGHTED_L1_DF:
        T = SupportSet.empty(n)
        if state.slot == 0:
            # no previous estimate to reweight from: plain lasso start
            w = np.full(n, lam)
        else:
            w = lam / (params.rwl1_epsilon + np.abs(pred_mean))
        return MapProblem(y, A, eye_m, T, zeros, 0.0, np.zeros((0, 0)), w)
    raise ValueError(f"{kind} has no degenerate MAP problem")


def step_baseline(kind, state, y, meas, dyn, params):
    """One slot of a Table-I baseline (or the plain Kalman filter)."""
    kind = TrackerKind(kind)
    if kind not in BASELINE_KINDS:
        raise ValueError(f"{kind} is not a baseline kind")
    y = np.asarray(y, dtype=complex).ravel()
    pred = predict(state.belief, dyn)
    if kind is TrackerKind.KALMAN_FILTER:
        post = kf_update(pred, y, meas)
        return _finish(state, post.mean, post.cov, _support(post.mean, params))
    prob = baseline_problem(kind, state, y, meas.A, params, pred.mean)
    x, rep = solve_map(prob, params.solver)
    return _finish(state, x, pred.cov, _support(x, params), rep)


def step_kf_cs(state, y, meas, dyn, params):
    """KF-CS: reduced Kalman filter on ``T`` then l1 addition detection on ``T^c``."""
    y = np.asarray(y, dtype=complex).ravel()
    pred = predict(state.belief, dyn)
    T = state.support
    A = meas.A
    n = A.shape[1]
    idx = T.indices
    x = np.zeros(n, dtype=complex)
    cov = pred.cov.copy()
    if idx.size:
        A_T = A[:, idx]
        P_TT = pred.cov[np.ix_(idx, idx)]
        K = kalman_gain(P_TT, A_T, meas.R)
        x[idx] = pred.mean[idx] + K @ (y - A_T @ pred.mean[idx])
        off_idx = T.complement().indices
        cov[np.ix_(idx, off_idx)] = 0
        cov[np.ix_(off_idx, idx)] = 0
        cov[np.ix_(idx, idx)] = posterior_cov(P_TT, K, A_T)
    comp = T.complement()
    rep = None
    if len(comp):
        resid = y - A[:, idx] @ x[idx]
        A_c = A[:, comp.indices]
        lam = _lam(params, A, y)
        det = MapProblem(resid, A_c, np.eye(A.shape[0]), SupportSet.empty(len(comp)),
                         np.zeros(len(comp), dtype=complex), 0.0, np.zeros((0, 0)),
                         np.full(len(comp), lam))
        z, rep = solve_map(det, params.solver)
        x[comp.indices] = z
        added = comp.indices[np.abs(z) > _support_cut(z, params)]
        support = T.union(SupportSet(added, n))
    else:
        support = T
    return _finish(state, x, cov, support, rep)


def _support_cut(z, params):
    if params.support_mode == "relative":
        return params.alpha * np.abs(z).max(initial=0.0)
    return params.alpha


def step(kind, state, y, meas, dyn, params):
    """Dispatch one slot update for ``kind``."""
    kind = TrackerKind(kind)
    if kind is TrackerKind.PLAY_PLUS_CS:
        return step_play_plus_cs(state, y, meas, dyn, params)
    if kind is TrackerKind.PLAY_CS:
        if params.weights is None:
            raise ValueError("PLAY-CS needs explicit l1 weights; use PLAY+-CS to learn them")
        return step_play_cs(state, y, meas, dyn, params, params.weights)
    if kind is TrackerKind.KF_CS:
        return step_kf_cs(state, y, meas, dyn, params)
    return step_baseline(kind, state, y, meas, dyn, params)


def tracker_models(params, meas: MeasurementModel, n: int):
    """Measurement and dynamics models a tracker uses for one slot."""
    if params.sigma_m is not None:
        meas = MeasurementModel(meas.A, noise_var=params.sigma_m ** 2)
    return meas, DynamicsModel(n, process_var=params.sigma_f ** 2)


def track(kind, observations, operators, params, state=None):
    """Fold the slot update over ``(y_t, meas_t)``; returns estimates and final state.

    ``operators`` is a sequence of :class:`MeasurementModel`.
    """
    kind = TrackerKind(kind)
    if not len(operators):
        raise ValueError("need at least one slot")
    n = operators[0].n
    state = init_state(n) if state is None else state
    if kind is TrackerKind.REGULAR_CS:
        # memoryless: every slot starts from the initial state
        fresh = init_state(n)
    out = []
    for y, meas in zip(observations, operators):
        t = state.slot + 1
        m, dyn = tracker_models(params, meas, n)
        try:
            new = step(kind, fresh if kind is TrackerKind.REGULAR_CS else state, y, m, dyn, params)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise TrackingError(t, exc) from exc
        state = replace(new, slot=t)
        out.append(state.estimate)
    return np.array(out), state


def run_sequence(kind, dataset, params):
    """Run one tracker over a :class:`~playcs.signals.SequenceDataset`."""
    estimates, _ = track(kind, dataset.observations, dataset.operators, params)
    return estimates
