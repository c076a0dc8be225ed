import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from playcs.signals import (
    PathSet,
    ScenarioSpec,
    SequenceDataset,
    UlaGeometry,
    dft_dictionary,
    gen_channel_sequence,
    gen_synthetic_sparse_sequence,
    generate,
    nominal_noise_std,
    sample_beamformer,
    steering_vector,
)


def channel_spec(**kw):
    base = dict(n=64, m=24, slots=30, sparsity=3, snr_db=20.0, seed=1)
    base.update(kw)
    return ScenarioSpec(**base)


def synthetic_spec(**kw):
    base = dict(n=32, m=16, slots=40, sparsity=4, snr_db=30.0, seed=2, kind="synthetic-sparse")
    base.update(kw)
    return ScenarioSpec(**base)


class TestGeometry:
    def test_broadside(self):
        np.testing.assert_allclose(steering_vector(0.0, UlaGeometry(4)), np.full(4, 0.5))

    def test_thirty_degrees(self):
        a = steering_vector(np.pi / 6, UlaGeometry(2))
        np.testing.assert_allclose(a, [1 / np.sqrt(2), 1j / np.sqrt(2)], atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-np.pi / 2 + 1e-6, np.pi / 2 - 1e-6), st.integers(2, 128))
    def test_unit_norm(self, theta, n):
        assert abs(np.linalg.norm(steering_vector(theta, UlaGeometry(n))) - 1) <= 1e-12

    def test_unit_norm_many(self, rng):
        geom = UlaGeometry(32)
        for th in rng.uniform(-np.pi / 2, np.pi / 2, 1000):
            assert abs(np.linalg.norm(steering_vector(th, geom)) - 1) <= 1e-12

    def test_single_antenna_rejected(self):
        with pytest.raises(ValueError):
            UlaGeometry(1)

    def test_two_point_dft(self):
        D = dft_dictionary(UlaGeometry(2))
        np.testing.assert_allclose(D, np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-15)

    @pytest.mark.parametrize("n", [16, 64])
    def test_dft_unitary(self, n):
        D = dft_dictionary(UlaGeometry(n))
        assert np.abs(D.conj().T @ D - np.eye(n)).max() <= 1e-10

    @pytest.mark.parametrize("n", [8, 16, 64])
    def test_dft_columns_are_steering_vectors(self, n):
        # column k has phase step -2 pi k / n, i.e. sin(theta) = -2k/n wrapped into (-1, 1)
        geom = UlaGeometry(n)
        D = dft_dictionary(geom)
        for k in range(n):
            s = -2 * k / n
            s = (s + 1) % 2 - 1
            if abs(s) >= 1:
                continue  # endfire, outside the open angle interval
            a = steering_vector(np.arcsin(s), geom)
            inner = np.abs(D.conj().T @ a)
            assert inner[k] == pytest.approx(1.0, abs=1e-10)
            assert np.delete(inner, k).max() <= 1e-10

    def test_path_set_validation(self):
        with pytest.raises(ValueError):
            PathSet([1.0], [np.pi / 2])
        with pytest.raises(ValueError):
            PathSet([1.0, 2.0], [0.1])
        assert PathSet([1.0, 1j], [0.0, 0.3]).count == 2


class TestBeamformer:
    def test_full_selection_is_dft(self, rng):
        geom = UlaGeometry(8)
        W = sample_beamformer(8, geom, rng)
        np.testing.assert_allclose(W, dft_dictionary(geom), atol=1e-15)

    def test_rows_orthonormal(self, rng):
        W = sample_beamformer(12, UlaGeometry(32), rng)
        assert np.abs(W @ W.conj().T - np.eye(12)).max() <= 1e-10

    def test_deterministic(self):
        geom = UlaGeometry(16)
        a = sample_beamformer(5, geom, np.random.default_rng(9))
        b = sample_beamformer(5, geom, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_too_many_rows(self, rng):
        with pytest.raises(ValueError):
            sample_beamformer(9, UlaGeometry(8), rng)

    def test_operator_is_row_selection(self):
        # W D with W made of DFT rows selects coordinates of the angle-domain vector
        ds = generate(channel_spec(slots=2))
        for A in ds.A:
            G = np.abs(A)
            assert np.all((np.isclose(G, 0, atol=1e-12)) | np.isclose(G, 1))
            assert np.all(G.sum(axis=1).round(12) == 1)


class TestScenarioSpec:
    def test_m_greater_than_n(self):
        with pytest.raises(ValueError, match="m <= n"):
            channel_spec(m=65)

    @pytest.mark.parametrize("kw", [
        dict(kind="bogus"), dict(snr_db=float("inf")), dict(support_change_prob=1.5),
        dict(gain_ar_coeff=0.0), dict(angle_walk_std=-1.0), dict(seed=-1), dict(seed=2 ** 64),
        dict(slots=0), dict(n=1, m=1),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            channel_spec(**kw)

    def test_round_trip(self):
        spec = synthetic_spec()
        assert ScenarioSpec.from_dict(spec.to_dict()) == spec
        assert spec.compression_rate == 0.5

    def test_largest_seed(self):
        ds = generate(channel_spec(seed=2 ** 64 - 1, slots=2))
        assert ds.slots == 2


class TestChannel:
    def test_frozen_dynamics(self):
        ds = generate(channel_spec(angle_walk_std=0.0, gain_ar_coeff=1.0))
        np.testing.assert_array_equal(ds.truth, np.broadcast_to(ds.truth[0], ds.truth.shape))

    def test_drifts_by_default(self):
        ds = generate(channel_spec())
        assert not np.array_equal(ds.truth[0], ds.truth[-1])

    @pytest.mark.parametrize("snr", [0.0, 15.0, 40.0])
    def test_snr_calibration(self, snr):
        ds = generate(channel_spec(snr_db=snr))
        clean = np.einsum("tmn,tn->tm", ds.A, ds.truth)
        ratio = (np.abs(clean) ** 2).sum(1) / (np.abs(ds.noise) ** 2).sum(1)
        assert abs(np.mean(10 * np.log10(ratio)) - snr) <= 0.5

    def test_noise_var_matches_sample_power(self):
        ds = generate(channel_spec())
        np.testing.assert_allclose(ds.noise_var, (np.abs(ds.noise) ** 2).mean(axis=1), rtol=1e-12)

    def test_energy_concentration(self):
        # slot-averaged share of energy in the 4 * N_L largest angle-domain
        # coefficients, pooled over 20 seeded datasets
        fracs = []
        for seed in range(20):
            ds = generate(channel_spec(m=24, slots=100, seed=seed))
            e = np.sort(np.abs(ds.truth) ** 2, axis=1)[:, ::-1]
            fracs.append(e[:, :12].sum() / e.sum())
        assert np.mean(fracs) >= 0.95

    def test_half_bin_leakage_bound(self):
        # a single path midway between two DFT bins leaks: its 4 nearest bins hold
        # 2 (2/pi)^2 + 2 (2/(3pi))^2 of the energy, so per-slot 95% is not guaranteed
        n = 64
        geom = UlaGeometry(n)
        s = -2 * 10.5 / n
        x = dft_dictionary(geom).conj().T @ steering_vector(np.arcsin(s), geom)
        e = np.sort(np.abs(x) ** 2)[::-1]
        expected = 2 * (2 / np.pi) ** 2 + 2 * (2 / (3 * np.pi)) ** 2
        assert e[:4].sum() == pytest.approx(expected, abs=2e-3)

    def test_fixed_operator_option(self):
        ds = generate(channel_spec(redraw_operators=False))
        assert all(np.array_equal(A, ds.A[0]) for A in ds.A)

    def test_wrong_kind(self):
        with pytest.raises(ValueError):
            gen_channel_sequence(synthetic_spec())
        with pytest.raises(ValueError):
            gen_synthetic_sparse_sequence(channel_spec())


class TestSynthetic:
    def test_constant_support(self):
        ds = generate(synthetic_spec(support_change_prob=0.0))
        masks = ds.truth != 0
        assert np.all(masks == masks[0]) and masks[0].sum() == 4

    def test_constant_values(self):
        ds = generate(synthetic_spec(support_change_prob=0.0, value_walk_std=0.0))
        np.testing.assert_array_equal(ds.truth, np.broadcast_to(ds.truth[0], ds.truth.shape))

    def test_support_change_count(self):
        p, slots, seeds = 0.1, 200, 10
        counts = []
        for seed in range(seeds):
            ds = generate(synthetic_spec(slots=slots, support_change_prob=p, seed=seed, n=64,
                                         sparsity=8))
            masks = ds.truth != 0
            for t in range(1, slots):
                added = np.sum(masks[t] & ~masks[t - 1]) > 0
                dropped = np.sum(~masks[t] & masks[t - 1]) > 0
                counts.append(int(added) + int(dropped))
        # each of the (slots - 1) transitions makes two Bernoulli(p) draws
        trials = 2 * (slots - 1) * seeds
        total = sum(counts)
        sd = np.sqrt(trials * p * (1 - p))
        assert abs(total - trials * p) <= 3 * sd

    def test_never_empty(self):
        ds = generate(synthetic_spec(sparsity=1, support_change_prob=1.0, slots=50))
        assert np.all((ds.truth != 0).sum(axis=1) >= 1)

    def test_operators_gaussian_scaled(self):
        ds = generate(synthetic_spec(n=64, m=32, slots=20))
        col_energy = (np.abs(ds.A) ** 2).sum(axis=1).mean()
        assert col_energy == pytest.approx(1.0, rel=0.05)


class TestDataset:
    @pytest.mark.parametrize("make", [channel_spec, synthetic_spec])
    def test_observation_identity(self, make):
        ds = generate(make())
        for A, x, n, y in zip(ds.A, ds.truth, ds.noise, ds.observations):
            np.testing.assert_array_equal(y, A @ x + n)

    @pytest.mark.parametrize("make", [channel_spec, synthetic_spec])
    def test_reproducible(self, make):
        a, b = generate(make()), generate(make())
        assert a == b
        for k in ("truth", "A", "observations", "noise", "noise_var"):
            assert getattr(a, k).tobytes() == getattr(b, k).tobytes()

    def test_seed_matters(self):
        assert generate(channel_spec(seed=1)) != generate(channel_spec(seed=2))

    def test_operators(self):
        ds = generate(channel_spec(slots=3))
        ops = ds.operators
        assert len(ops) == 3 and ops[0].noise_var == ds.noise_var[0]

    def test_truncate(self):
        ds = generate(synthetic_spec())
        head = ds.truncate(5)
        assert head.slots == 5
        np.testing.assert_array_equal(head.observations, ds.observations[:5])

    def test_unequal_lengths(self):
        ds = generate(synthetic_spec(slots=3))
        with pytest.raises(ValueError):
            SequenceDataset(ds.truth[:2], ds.A, ds.observations, ds.noise, ds.noise_var, ds.spec)

    def test_nominal_noise_std(self):
        spec = channel_spec(n=64, m=16, sparsity=4, snr_db=10.0)
        # 4 paths of unit power, a quarter observed, spread over 16 measurements
        assert nominal_noise_std(spec) == pytest.approx(np.sqrt(1 / 16 / 10))
