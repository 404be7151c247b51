"""k-fold cross-validated accuracy: the GA's fitness and the report metric.

The ± spread reported everywhere is the population standard deviation over
the k fold accuracies (divisor k, not k-1). Folds are not stratified by
label unless explicitly requested.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import forest, streams, tabular


@dataclass(frozen=True)
class CVResult:
    fold_accuracies: tuple[float, ...]
    mean: float
    std: float

    @classmethod
    def from_folds(cls, accuracies: Sequence[float]) -> "CVResult":
        accs = tuple(float(a) for a in accuracies)
        return cls(accs, float(np.mean(accs)), float(np.std(accs)))


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffled disjoint folds covering 0..n-1, sizes differing by at most 1."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    perm = streams.spawn(seed, "folds").permutation(n)
    return [fold.copy() for fold in np.array_split(perm, k)]


def stratified_kfold_indices(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Label-stratified variant: each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    if k < 2 or k > n:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    rng = streams.spawn(seed, "folds-stratified")
    folds: list[list[int]] = [[] for _ in range(k)]
    for value in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == value))
        for j, row in enumerate(idx):
            folds[j % k].append(int(row))
    return [np.asarray(f, dtype=np.intp) for f in folds]


def accuracy(pred: Sequence[int] | np.ndarray, truth: Sequence[int] | np.ndarray) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.shape[0] == 0:
        raise ValueError("pred and truth must be equal-length non-empty vectors")
    return float(np.mean(pred == truth))


def cv_accuracy(
    table: tabular.FeatureTable,
    mask: np.ndarray,
    fcfg: forest.ForestConfig,
    k: int,
    seed: int,
    stratified: bool = False,
) -> CVResult:
    """Fit on out-of-fold rows of the masked table, score each fold.

    The fold split derives from ``seed`` and each fold's forest seed derives
    from (seed, fold index), so results are independent of evaluation order.
    """
    masked = tabular.apply_mask(table, mask)
    n = masked.n
    if k > n:
        raise ValueError(f"cannot run {k}-fold CV on {n} rows")
    if stratified:
        folds = stratified_kfold_indices(masked.labels, k, seed)
    else:
        folds = kfold_indices(n, k, seed)
    X = masked.features
    y = masked.labels.astype(np.int64)
    accs = []
    for i, fold in enumerate(folds):
        train = np.setdiff1d(np.arange(n), fold)
        fold_cfg = replace(fcfg, seed=streams.derive(seed, "fold", i))
        model = forest.fit(X[train], y[train], fold_cfg)
        accs.append(accuracy(forest.predict(model, X[fold]), y[fold]))
    return CVResult.from_folds(accs)
