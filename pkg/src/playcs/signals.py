"""Ground-truth dynamic sparse sequences and the mmWave channel scenario."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import MeasurementModel

KINDS = ("synthetic-sparse", "mmwave-channel")
ANGLE_LIMIT = np.pi / 2 - 1e-3


@dataclass(frozen=True)
class UlaGeometry:
    """Half-wavelength uniform linear array."""

    n_antennas: int

    def __post_init__(self):
        if self.n_antennas < 2:
            raise ValueError("a ULA needs at least 2 antennas")


@dataclass(frozen=True)
class PathSet:
    gains: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=complex).ravel()
        th = np.asarray(self.angles, dtype=float).ravel()
        if g.size < 1 or g.size != th.size:
            raise ValueError("need matching, nonempty gains and angles")
        if np.any(np.abs(th) >= np.pi / 2):
            raise ValueError("angles must lie in (-pi/2, pi/2)")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "angles", th)

    @property
    def count(self):
        return self.gains.size


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to regenerate a dataset bit-for-bit.

    ``sparsity`` is the support size L (synthetic) or the number of paths
    (channel). ``value_walk_std`` drives the synthetic on-support random walk;
    ``redraw_operators=False`` keeps the slot-1 operator for every slot.
    """

    n: int
    m: int
    slots: int
    sparsity: int
    snr_db: float
    seed: int = 0
    kind: str = "mmwave-channel"
    angle_walk_std: float = 0.002
    gain_ar_coeff: float = 0.999
    support_change_prob: float = 0.02
    value_walk_std: float = 0.05
    redraw_operators: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.n < 1 or self.m < 1 or self.slots < 1 or self.sparsity < 1:
            raise ValueError("n, m, slots and sparsity must be positive")
        if self.m > self.n:
            raise ValueError(f"m <= n violated: m={self.m} > n={self.n}")
        if self.kind == "synthetic-sparse" and self.sparsity > self.n:
            raise ValueError("sparsity must not exceed n")
        if self.kind == "mmwave-channel" and self.n < 2:
            raise ValueError("channel scenarios need n >= 2 antennas")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if not 0 <= self.support_change_prob <= 1:
            raise ValueError("support_change_prob must lie in [0, 1]")
        if not 0 < self.gain_ar_coeff <= 1:
            raise ValueError("gain_ar_coeff must lie in (0, 1]")
        if self.angle_walk_std < 0 or self.value_walk_std < 0:
            raise ValueError("walk standard deviations must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def compression_rate(self):
        return self.m / self.n

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SequenceDataset:
    """Truth, per-slot operators, noise and observations for ``T`` slots.

    ``observations[t] == A[t] @ truth[t] + noise[t]`` holds exactly as stored.
    """

    truth: np.ndarray
    A: np.ndarray
    observations: np.ndarray
    noise: np.ndarray
    noise_var: np.ndarray
    spec: ScenarioSpec

    def __post_init__(self):
        T = self.truth.shape[0]
        if not (self.A.shape[0] == self.observations.shape[0] == self.noise.shape[0]
                == self.noise_var.shape[0] == T):
            raise ValueError("dataset arrays have unequal slot counts")

    @property
    def slots(self):
        return self.truth.shape[0]

    @cached_property
    def operators(self):
        return [MeasurementModel(A, noise_var=float(v)) for A, v in zip(self.A, self.noise_var)]

    def truncate(self, t):
        return SequenceDataset(self.truth[:t], self.A[:t], self.observations[:t],
                               self.noise[:t], self.noise_var[:t], self.spec)

    def __eq__(self, other):
        if not isinstance(other, SequenceDataset):
            return NotImplemented
        return self.spec == other.spec and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("truth", "A", "observations", "noise", "noise_var"))


def steering_vector(theta, geom: UlaGeometry):
    """ULA response ``exp(j pi k sin(theta)) / sqrt(N)``, ``k = 0..N-1``."""
    k = np.arange(geom.n_antennas)
    return np.exp(1j * np.pi * k * np.sin(theta)) / np.sqrt(geom.n_antennas)


def dft_dictionary(geom: UlaGeometry):
    """Unitary DFT matrix, entry ``(n, k) = exp(-2j pi n k / N) / sqrt(N)``."""
    n = geom.n_antennas
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def sample_beamformer(m, geom: UlaGeometry, rng):
    """``m`` distinct DFT rows, chosen uniformly at random."""
    if m > geom.n_antennas:
        raise ValueError(f"cannot select {m} rows from a {geom.n_antennas}-point DFT")
    rows = np.sort(rng.choice(geom.n_antennas, size=m, replace=False))
    return dft_dictionary(geom)[rows]


def _cn(rng, size):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def _measure(rng, A, x, snr_db):
    """Observation with noise rescaled to hit ``snr_db`` exactly on this slot."""
    clean = A @ x
    noise = _cn(rng, clean.size)
    p_sig = np.vdot(clean, clean).real
    scale = np.sqrt(p_sig / (10.0 ** (snr_db / 10.0)) / np.vdot(noise, noise).real)
    noise = noise * scale
    var = p_sig / (10.0 ** (snr_db / 10.0)) / clean.size
    if var <= 0:
        var = 1e-12
    return clean + noise, noise, var


def _finalize(spec, truth, ops, rng):
    ys, ns, vs = [], [], []
    for A, x in zip(ops, truth):
        y, noise, var = _measure(rng, A, x, spec.snr_db)
        ys.append(y)
        ns.append(noise)
        vs.append(var)
    return SequenceDataset(np.array(truth), np.array(ops), np.array(ys), np.array(ns),
                           np.array(vs), spec)


def channel_paths(spec: ScenarioSpec, rng):
    """Initial multipath set: angles uniform in (-pi/3, pi/3), CN(0, 1) gains."""
    angles = rng.uniform(-np.pi / 3, np.pi / 3, size=spec.sparsity)
    return PathSet(_cn(rng, spec.sparsity), angles)


def evolve_paths(paths: PathSet, spec: ScenarioSpec, rng, gain_scale=1.0):
    th = paths.angles + spec.angle_walk_std * rng.standard_normal(paths.count)
    th = np.clip(th, -ANGLE_LIMIT, ANGLE_LIMIT)
    rho = spec.gain_ar_coeff
    g = rho * paths.gains + np.sqrt(1.0 - rho * rho) * gain_scale * _cn(rng, paths.count)
    return PathSet(g, th)


def gen_channel_sequence(spec: ScenarioSpec, rng=None) -> SequenceDataset:
    """Angle-domain channel tracking data: ``x_t = D^H H_t``, ``A_t = W_t D``."""
    if spec.kind != "mmwave-channel":
        raise ValueError("spec.kind must be 'mmwave-channel'")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    geom = UlaGeometry(spec.n)
    D = dft_dictionary(geom)
    paths = channel_paths(spec, rng)
    truth, ops = [], []
    W = None
    for t in range(spec.slots):
        if t:
            paths = evolve_paths(paths, spec, rng)
        H = sum(g * steering_vector(th, geom) for g, th in zip(paths.gains, paths.angles))
        truth.append(D.conj().T @ H)
        if W is None or spec.redraw_operators:
            W = sample_beamformer(spec.m, geom, rng)
        ops.append(W @ D)
    return _finalize(spec, truth, ops, rng)


def gen_synthetic_sparse_sequence(spec: ScenarioSpec, rng=None) -> SequenceDataset:
    """Slowly changing sparse sequence measured by fresh Gaussian matrices."""
    if spec.kind != "synthetic-sparse":
        raise ValueError("spec.kind must be 'synthetic-sparse'")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n, m, p = spec.n, spec.m, spec.support_change_prob
    x = np.zeros(n, dtype=complex)
    support = rng.choice(n, size=spec.sparsity, replace=False)
    x[support] = _cn(rng, spec.sparsity)
    truth, ops = [], []
    A = None
    for t in range(spec.slots):
        if t:
            on = np.flatnonzero(x)
            x[on] += spec.value_walk_std * _cn(rng, on.size)
            add = rng.random() < p
            drop = rng.random() < p
            if add and on.size < n:
                i = rng.choice(np.flatnonzero(x == 0))
                x[i] = _cn(rng, 1)[0]
            if drop and on.size > 1:
                x[rng.choice(on)] = 0
        truth.append(x.copy())
        if A is None or spec.redraw_operators:
            A = _cn(rng, (m, n)) / np.sqrt(m)
        ops.append(A)
    return _finalize(spec, truth, ops, rng)


def generate(spec: ScenarioSpec, rng=None) -> SequenceDataset:
    if spec.kind == "mmwave-channel":
        return gen_channel_sequence(spec, rng)
    return gen_synthetic_sparse_sequence(spec, rng)


def nominal_noise_std(spec: ScenarioSpec) -> float:
    """Measurement-noise std implied by the spec's SNR at nominal signal power.

    Channel truth has expected energy ``sparsity`` and the selection-type
    operators keep a fraction ``m/n`` of it; Gaussian operators keep all of it.
    """
    if spec.kind == "mmwave-channel":
        p_meas = spec.sparsity * spec.m / spec.n
    else:
        p_meas = spec.sparsity
    return float(np.sqrt(p_meas / spec.m / 10.0 ** (spec.snr_db / 10.0)))
