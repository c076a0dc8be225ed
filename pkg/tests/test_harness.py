import itertools

import numpy as np
import pytest

from playcs import harness
from playcs.harness import (
    ExperimentError,
    Method,
    aggregate,
    as_methods,
    derive_spec,
    derived_seed,
    run_experiment,
    run_sweep,
)
from playcs.signals import ScenarioSpec, generate
from playcs.trackers import TrackerKind, TrackerParams

BASE = ScenarioSpec(n=16, m=8, slots=5, sparsity=2, snr_db=20.0, seed=11)
METHODS = [Method("oracle", "oracle"), Method("zero", "zero"),
           Method("regular", "regular_cs"), Method("play", "play_plus_cs")]


class TestMethods:
    def test_defaults(self):
        m = Method("x", "kf_cs")
        assert m.params.kind is TrackerKind.KF_CS

    def test_kind_overrides_params(self):
        m = Method("x", "modified_cs", TrackerParams(kind="regular_cs", lam=0.5))
        assert m.params.kind is TrackerKind.MODIFIED_CS and m.params.lam == 0.5

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Method("x", "magic")

    def test_as_methods_forms(self):
        out = as_methods(["oracle", ("regular_cs", TrackerParams()), Method("z", "zero")])
        assert [m.name for m in out] == ["oracle", "regular_cs", "z"]

    def test_duplicate_names(self):
        with pytest.raises(ValueError):
            as_methods(["zero", "zero"])

    def test_empty(self):
        with pytest.raises(ValueError):
            as_methods([])


class TestExperiment:
    def test_reference_methods(self):
        res = run_experiment(generate(BASE), METHODS[:2])
        assert res["oracle"].tnmse == 0 and res["oracle"].tcorr == pytest.approx(1.0)
        assert res["zero"].tnmse == pytest.approx(1.0)

    def test_deterministic(self):
        ds = generate(BASE)
        assert run_experiment(ds, METHODS) == run_experiment(ds, METHODS)

    def test_error_names_method(self):
        bad = Method("bad", "play_cs", TrackerParams(weights=np.ones(2)))
        with pytest.raises(ExperimentError) as info:
            run_experiment(generate(BASE), [bad])
        assert info.value.method == "bad"


class TestSeeds:
    def test_injective_on_acceptance_grid(self):
        snr, ms, trials = (40.0, 25.0), (24, 16), 20
        base = ScenarioSpec(n=64, m=24, slots=100, sparsity=3, snr_db=40.0, seed=2024)
        seeds = {derive_spec(base, snr, ms, i, j, t, trials).seed
                 for i, j, t in itertools.product(range(2), range(2), range(trials))}
        assert len(seeds) == 2 * 2 * trials

    def test_injective_on_larger_grid(self):
        seeds = {derived_seed(7, c, t, 30) for c in range(50) for t in range(30)}
        assert len(seeds) == 1500

    def test_differs_from_base(self):
        assert derived_seed(5, 0, 0, 1) != 5

    def test_in_range(self):
        s = derived_seed(2 ** 64 - 1, 3, 2, 4)
        assert 0 <= s < 2 ** 64

    def test_spec_fields(self):
        spec = derive_spec(BASE, [10.0, 30.0], [4, 8], 1, 0, 2, 3)
        assert spec.snr_db == 30.0 and spec.m == 4 and spec.n == BASE.n


class TestAggregate:
    def test_values(self):
        s = aggregate([1.0, 3.0], [0.5, 0.7])
        assert s.mean_tnmse == 2.0 and s.mean_tcorr == pytest.approx(0.6)
        assert s.se_tnmse == pytest.approx(1.0) and s.trials == 2

    def test_single_trial(self):
        s = aggregate([0.2], [0.9])
        assert s.mean_tnmse == 0.2 and np.isnan(s.se_tnmse)

    def test_permutation_invariant(self, rng):
        a, b = rng.random(17), rng.random(17)
        ref = aggregate(a, b)
        for _ in range(20):
            p = rng.permutation(17)
            assert aggregate(a[p], b[p]) == ref

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([], [])


class TestSweep:
    def test_single_cell_equals_experiment(self):
        res = run_sweep(BASE, [20.0], [8], 1, METHODS)
        ds = generate(derive_spec(BASE, [20.0], [8], 0, 0, 0, 1))
        ref = run_experiment(ds, METHODS)
        for name, series in ref.items():
            stats = res.cells[(20.0, 8)][name]
            assert stats.mean_tnmse == series.tnmse
            assert stats.mean_tcorr == series.tcorr

    def test_mean_within_trial_range(self):
        trials = 4
        res = run_sweep(BASE, [15.0], [6], trials, METHODS[2:])
        for name in ("regular", "play"):
            per = []
            for t in range(trials):
                ds = generate(derive_spec(BASE, [15.0], [6], 0, 0, t, trials))
                per.append(run_experiment(ds, [m for m in METHODS if m.name == name])[name].tnmse)
            mean = res.cells[(15.0, 6)][name].mean_tnmse
            assert min(per) <= mean <= max(per)
            assert mean == pytest.approx(np.mean(per), rel=1e-12)

    def test_grid_complete(self):
        res = run_sweep(BASE, [10.0, 20.0], [4, 8], 2, METHODS[:2])
        assert set(res.cells) == {(10.0, 4), (10.0, 8), (20.0, 4), (20.0, 8)}
        assert len(list(res.records())) == 4 * 2
        assert not res.failures

    def test_workers_match_serial(self):
        a = run_sweep(BASE, [20.0], [4, 8], 2, METHODS[2:], workers=1)
        b = run_sweep(BASE, [20.0], [4, 8], 2, METHODS[2:], workers=2)
        assert a.cells == b.cells

    def test_partial_failure_reported_per_cell(self, monkeypatch):
        real = harness._trial

        def flaky(args):
            spec, methods = args
            if spec.m == 4:
                raise FloatingPointError("boom")
            return real(args)

        monkeypatch.setattr(harness, "_trial", flaky)
        res = run_sweep(BASE, [20.0], [4, 8], 2, METHODS[:2])
        assert set(res.failures) == {(20.0, 4)} and "boom" in res.failures[(20.0, 4)]
        assert set(res.cells) == {(20.0, 8)}

    def test_trials_positive(self):
        with pytest.raises(ValueError):
            run_sweep(BASE, [20.0], [8], 0, METHODS[:1])
