import numpy as np
import pytest

from asdmeta import streams, synth
from asdmeta.cv import (
    CVResult,
    accuracy,
    cv_accuracy,
    kfold_indices,
    stratified_kfold_indices,
)
from asdmeta.forest import ForestConfig
from asdmeta.tabular import FeatureTable


class TestKFold:
    def test_forced_sizes_n6_k3(self):
        folds = kfold_indices(6, 3, seed=0)
        assert [len(f) for f in folds] == [2, 2, 2]

    def test_remainder_distribution_n7_k3(self):
        folds = kfold_indices(7, 3, seed=0)
        assert sorted(len(f) for f in folds) == [2, 2, 3]
        assert [len(f) for f in folds] == [3, 2, 2]

    def test_determinism(self):
        a = kfold_indices(20, 4, seed=9)
        b = kfold_indices(20, 4, seed=9)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        c = kfold_indices(20, 4, seed=10)
        assert any(not np.array_equal(x, y) for x, y in zip(a, c))

    def test_disjoint_and_covering_sweep(self):
        # exhaustive over the spec'd ranges
        for n in range(2, 201):
            for k in (2, 3, 5, n):
                if k > n:
                    continue
                folds = kfold_indices(n, k, seed=n * 1000 + k)
                sizes = [len(f) for f in folds]
                assert max(sizes) - min(sizes) <= 1
                joined = np.concatenate(folds)
                assert len(joined) == n
                assert np.array_equal(np.sort(joined), np.arange(n))

    def test_errors(self):
        with pytest.raises(ValueError):
            kfold_indices(3, 4, seed=0)
        with pytest.raises(ValueError):
            kfold_indices(5, 1, seed=0)

    def test_stratified_balances_classes(self):
        labels = np.array([0] * 30 + [1] * 12)
        folds = stratified_kfold_indices(labels, 3, seed=1)
        for fold in folds:
            assert np.sum(labels[fold] == 1) == 4
        joined = np.sort(np.concatenate(folds))
        assert np.array_equal(joined, np.arange(42))


class TestAccuracy:
    def test_basic(self):
        assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
        assert accuracy([1, 0, 1], [0, 1, 0]) == 0.0
        assert accuracy([1, 1, 0, 0], [1, 1, 0, 1]) == 0.75

    def test_complement_property(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            truth = rng.integers(0, 2, 17)
            pred = rng.integers(0, 2, 17)
            assert accuracy(pred, truth) + accuracy(1 - pred, truth) == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            accuracy([1, 0], [1])
        with pytest.raises(ValueError):
            accuracy([], [])


def test_cvresult_mean_std_population():
    res = CVResult.from_folds([0.5, 0.7, 0.9])
    assert res.mean == pytest.approx(0.7)
    assert res.std == pytest.approx(np.std([0.5, 0.7, 0.9]))  # divisor k


def _column_table(columns, labels):
    n, d = columns.shape
    return FeatureTable(
        subject_ids=tuple(f"s{i}" for i in range(n)),
        site_ids=("Z",) * n,
        features=columns,
        labels=labels,
        feature_names=tuple(f"c{j}" for j in range(d)),
    )


class TestCVAccuracy:
    def test_mean_invariant_to_consistent_column_permutation(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 3))
        y = (rng.random(30) < 0.5).astype(np.int8)
        fcfg = ForestConfig(n_trees=5)
        perm = [2, 0, 1]
        for j in range(3):
            mask = np.zeros(3, dtype=np.uint8)
            mask[j] = 1
            a = cv_accuracy(_column_table(X, y), mask, fcfg, 3, seed=5)
            permuted_mask = np.zeros(3, dtype=np.uint8)
            permuted_mask[perm.index(j)] = 1
            b = cv_accuracy(_column_table(X[:, perm], y), permuted_mask, fcfg, 3, seed=5)
            assert a == b

    def test_strong_signal_with_truth_mask(self):
        cfg = synth.SynthConfig(sizes=(150,), d=8, k_informative=2,
                                effect_size=5.0, seed=21)
        table, truth, _ = synth.generate(cfg)
        res = cv_accuracy(table, truth, ForestConfig(n_trees=20), 3,
                          seed=streams.derive(21, "cv"))
        assert res.mean >= 0.9

    def test_determinism_and_fold_seed_derivation(self):
        cfg = synth.SynthConfig(sizes=(40,), d=4, k_informative=1,
                                effect_size=1.0, seed=3)
        table, _, _ = synth.generate(cfg)
        mask = np.ones(4, dtype=np.uint8)
        fcfg = ForestConfig(n_trees=5)
        a = cv_accuracy(table, mask, fcfg, 4, seed=8)
        b = cv_accuracy(table, mask, fcfg, 4, seed=8)
        assert a == b
        c = cv_accuracy(table, mask, fcfg, 4, seed=9)
        assert a != c

    def test_k_larger_than_n_rejected(self, tiny_table):
        with pytest.raises(ValueError, match="fold"):
            cv_accuracy(tiny_table, np.ones(4, dtype=np.uint8),
                        ForestConfig(n_trees=1), 5, seed=0)
