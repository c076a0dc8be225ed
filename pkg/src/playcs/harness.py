"""Monte-Carlo experiments and SNR x M sweeps over tracker configurations."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .metrics import MetricSeries, metric_series
from .signals import ScenarioSpec, SequenceDataset, generate
from .trackers import TrackerKind, TrackerParams, run_sequence

log = logging.getLogger(__name__)

REFERENCE_METHODS = ("oracle", "zero")
_SEED_STRIDE = 0x9E3779B97F4A7C15  # odd, so index -> seed is a bijection mod 2^64
_MASK64 = (1 << 64) - 1


class ExperimentError(RuntimeError):
    def __init__(self, method, cause):
        super().__init__(f"method {method!r} failed: {cause}")
        self.method = method


@dataclass(frozen=True)
class Method:
    """A named tracker configuration, or one of the reference estimators.

    ``kind`` is a :class:`TrackerKind` value, ``"oracle"`` (returns the truth)
    or ``"zero"`` (returns zeros).
    """

    name: str
    kind: str
    params: TrackerParams | None = None

    def __post_init__(self):
        if self.kind in REFERENCE_METHODS:
            return
        kind = TrackerKind(self.kind)
        params = self.params or TrackerParams(kind=kind)
        object.__setattr__(self, "kind", kind.value)
        object.__setattr__(self, "params", dataclasses.replace(params, kind=kind))

    def estimate(self, dataset: SequenceDataset):
        if self.kind == "oracle":
            return dataset.truth.copy()
        if self.kind == "zero":
            return np.zeros_like(dataset.truth)
        return run_sequence(self.kind, dataset, self.params)


def as_methods(methods):
    out = []
    for m in methods:
        if isinstance(m, Method):
            out.append(m)
        elif isinstance(m, str):
            out.append(Method(m, m))
        else:
            kind, params = m
            out.append(Method(str(TrackerKind(kind)), kind, params))
    names = [m.name for m in out]
    if not out:
        raise ValueError("need at least one method")
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate method names: {names}")
    return out


def run_experiment(dataset: SequenceDataset, methods) -> dict[str, MetricSeries]:
    """Run every method on the same data and return per-method metric series."""
    out = {}
    for m in as_methods(methods):
        try:
            est = m.estimate(dataset)
        except Exception as exc:
            raise ExperimentError(m.name, exc) from exc
        out[m.name] = metric_series(m.name, est, dataset.truth, dataset.spec)
    return out


def derived_seed(base_seed, cell_index, trial, trials) -> int:
    """Seed for one (cell, trial); injective in ``cell_index * trials + trial``."""
    k = cell_index * trials + trial + 1
    return (int(base_seed) + k * _SEED_STRIDE) & _MASK64


def derive_spec(base: ScenarioSpec, snr_list, m_list, i_snr, i_m, trial, trials) -> ScenarioSpec:
    cell = i_snr * len(m_list) + i_m
    return dataclasses.replace(base, snr_db=float(snr_list[i_snr]), m=int(m_list[i_m]),
                               seed=derived_seed(base.seed, cell, trial, trials))


@dataclass(frozen=True)
class CellStats:
    mean_tnmse: float
    mean_tcorr: float
    se_tnmse: float
    se_tcorr: float
    trials: int


def aggregate(tnmse, tcorr) -> CellStats:
    """Mean and standard error over trials; order of trials does not matter."""
    a = np.sort(np.asarray(tnmse, dtype=float))
    b = np.sort(np.asarray(tcorr, dtype=float))
    n = a.size
    if n < 1:
        raise ValueError("need at least one trial")
    if n > 1:
        se_a = float(np.std(a, ddof=1) / np.sqrt(n))
        se_b = float(np.std(b, ddof=1) / np.sqrt(n))
    else:
        se_a = se_b = float("nan")
    return CellStats(float(np.mean(a)), float(np.mean(b)), se_a, se_b, n)


@dataclass(frozen=True)
class SweepResult:
    """Per-(snr, m) cell statistics for every method.

    ``cells[(snr, m)][method]`` is a :class:`CellStats`; cells whose trials
    raised are listed in ``failures`` with the error text.
    """

    snr_list: tuple
    m_list: tuple
    methods: tuple
    cells: dict
    failures: dict

    def records(self):
        for snr in self.snr_list:
            for m in self.m_list:
                stats = self.cells.get((snr, m))
                if stats is None:
                    continue
                for name in self.methods:
                    yield snr, m, name, stats[name]


def _trial(args):
    spec, methods = args
    ds = generate(spec)
    res = run_experiment(ds, methods)
    return {k: (v.tnmse, v.tcorr) for k, v in res.items()}


def run_sweep(base_spec: ScenarioSpec, snr_list, m_list, trials, methods,
              workers=1) -> SweepResult:
    """Grid of SNR x M, ``trials`` datasets per cell, all methods per dataset."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    methods = as_methods(methods)
    snr_list = tuple(float(s) for s in snr_list)
    m_list = tuple(int(m) for m in m_list)
    jobs = []
    for i, snr in enumerate(snr_list):
        for j, m in enumerate(m_list):
            for t in range(trials):
                jobs.append(((snr, m), (derive_spec(base_spec, snr_list, m_list, i, j, t, trials), methods)))
    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(key, pool.submit(_trial, arg)) for key, arg in jobs]
            outcomes = []
            for key, fut in futures:
                try:
                    outcomes.append((key, fut.result(), None))
                except Exception as exc:
                    outcomes.append((key, None, exc))
    else:
        outcomes = []
        for key, arg in jobs:
            try:
                outcomes.append((key, _trial(arg), None))
            except Exception as exc:
                outcomes.append((key, None, exc))
    failures = {}
    for key, res, exc in outcomes:
        if exc is not None:
            log.warning("cell %s failed: %s", key, exc)
            failures.setdefault(key, str(exc))
            continue
        results.setdefault(key, []).append(res)
    names = tuple(m.name for m in methods)
    cells = {}
    for key, trial_results in results.items():
        if key in failures:
            continue
        cells[key] = {
            name: aggregate([r[name][0] for r in trial_results], [r[name][1] for r in trial_results])
            for name in names
        }
    return SweepResult(snr_list, m_list, names, cells, failures)
