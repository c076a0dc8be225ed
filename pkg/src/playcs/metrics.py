"""Reconstruction metrics: NMSE, correlation and their time averages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def nmse(est, truth) -> float:
    """``||est - truth||^2 / ||truth||^2``."""
    est = np.asarray(est).ravel()
    truth = np.asarray(truth).ravel()
    denom = np.vdot(truth, truth).real
    if denom == 0:
        raise ValueError("NMSE is undefined for a zero truth vector")
    d = est - truth
    return float(np.vdot(d, d).real / denom)


def corr(est, truth) -> float:
    """Modulus of the normalized inner product ``|est^H truth| / (||est|| ||truth||)``."""
    est = np.asarray(est).ravel()
    truth = np.asarray(truth).ravel()
    ne, nt = np.linalg.norm(est), np.linalg.norm(truth)
    if ne == 0 or nt == 0:
        raise ValueError("correlation is undefined for a zero vector")
    return float(min(abs(np.vdot(est, truth)) / (ne * nt), 1.0))


def _slot_corr(est, truth):
    # a zero estimate carries no correlation with the truth
    if not np.any(est):
        if not np.any(truth):
            raise ValueError("correlation is undefined for a zero truth vector")
        return 0.0
    return corr(est, truth)


@dataclass(frozen=True, eq=False)
class MetricSeries:
    """Per-slot NMSE and Corr of one method on one dataset."""

    method: str
    nmse: np.ndarray
    corr: np.ndarray
    spec: object = None

    @property
    def tnmse(self) -> float:
        return float(np.mean(self.nmse))

    @property
    def tcorr(self) -> float:
        return float(np.mean(self.corr))

    @property
    def slots(self):
        return self.nmse.size

    def __eq__(self, other):
        if not isinstance(other, MetricSeries):
            return NotImplemented
        return (self.method == other.method and self.spec == other.spec
                and np.array_equal(self.nmse, other.nmse)
                and np.array_equal(self.corr, other.corr))


def metric_series(method, estimates, truth, spec=None) -> MetricSeries:
    estimates = np.asarray(estimates)
    truth = np.asarray(truth)
    if estimates.shape != truth.shape:
        raise ValueError(f"estimate shape {estimates.shape} != truth shape {truth.shape}")
    n = np.array([nmse(e, x) for e, x in zip(estimates, truth)])
    c = np.array([_slot_corr(e, x) for e, x in zip(estimates, truth)])
    return MetricSeries(str(method), n, c, spec)


def to_db(value):
    with np.errstate(divide="ignore"):
        return float(10.0 * np.log10(value))
