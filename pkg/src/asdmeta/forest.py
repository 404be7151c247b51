"""Random-forest binary classifier built on a deterministic CART core.

Trees are grown to purity (subject to ``min_samples_leaf``) on bootstrap
resamples, with splits chosen by Gini impurity decrease over a random feature
subset and thresholds placed at midpoints between consecutive distinct sorted
values. Tie-breaking is fixed: among equal impurity decreases the lowest
feature index wins, then the lowest threshold. Prediction is a majority vote
over trees with ties broken toward label 0 (NT).

Each tree draws from its own stream derived from (seed, tree index), so
serial and parallel fits produce identical models. Results are a function of
(X, y, seed) with rows in the given order; reordering rows may change trees.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import streams
from .fileio import atomic_write_text


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters; ``max_features=None`` means ceil(sqrt(d)) per split."""

    n_trees: int = 100
    max_features: int | None = None
    min_samples_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1 when given")


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; ``feature[i] < 0`` marks a leaf. ``count0``/``count1``
    are the training rows of each class routed through every node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count0: np.ndarray
    count1: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def leaf_label(self, node: int) -> int:
        return 1 if self.count1[node] > self.count0[node] else 0


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    n_features: int
    config: ForestConfig


@njit(cache=True)
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _grow_tree(X, y, sample_idx, max_features, min_leaf, rng_state):
    n = sample_idx.shape[0]
    d = X.shape[1]
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    count0 = np.zeros(max_nodes, np.int64)
    count1 = np.zeros(max_nodes, np.int64)

    idxbuf = sample_idx.copy()
    # work stack of (node id, lo, hi) ranges over idxbuf
    stack = np.zeros((max_nodes, 3), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    sp = 1
    n_nodes = 1

    scratch = np.empty(d, np.int64)
    vals = np.empty(n, np.float64)
    ys = np.empty(n, np.int64)
    state = rng_state

    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        lo = stack[sp, 1]
        hi = stack[sp, 2]
        m = hi - lo
        n1 = 0
        for i in range(lo, hi):
            n1 += y[idxbuf[i]]
        n0 = m - n1
        count0[node] = n0
        count1[node] = n1
        if n0 == 0 or n1 == 0 or m < 2 * min_leaf:
            continue

        # candidate features: uniform subset without replacement, scanned in
        # ascending original index so ties resolve to the lowest feature
        q = max_features if max_features < d else d
        for i in range(d):
            scratch[i] = i
        for i in range(q):
            state, z = _splitmix64(state)
            j = i + np.int64(z % np.uint64(d - i))
            tmp = scratch[i]
            scratch[i] = scratch[j]
            scratch[j] = tmp
        sub = np.sort(scratch[:q])

        parent = 1.0 - (n0 * n0 + n1 * n1) / (float(m) * float(m))
        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        for fi in range(q):
            f = sub[fi]
            for i in range(m):
                vals[i] = X[idxbuf[lo + i], f]
            order = np.argsort(vals[:m], kind="mergesort")
            for i in range(m):
                ys[i] = y[idxbuf[lo + order[i]]]
            l1 = 0
            for pos in range(m - 1):
                l1 += ys[pos]
                v0 = vals[order[pos]]
                v1 = vals[order[pos + 1]]
                if not v1 > v0:
                    continue
                nl = pos + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                l0 = nl - l1
                r1 = n1 - l1
                r0 = nr - r1
                gl = 1.0 - (l0 * l0 + l1 * l1) / (float(nl) * float(nl))
                gr = 1.0 - (r0 * r0 + r1 * r1) / (float(nr) * float(nr))
                gain = parent - (nl * gl + nr * gr) / m
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_t = 0.5 * (v0 + v1)
        if best_f < 0:
            continue

        i = lo
        j = hi - 1
        while i <= j:
            if X[idxbuf[i], best_f] <= best_t:
                i += 1
            else:
                tmp = idxbuf[i]
                idxbuf[i] = idxbuf[j]
                idxbuf[j] = tmp
                j -= 1
        mid = i
        feature[node] = best_f
        threshold[node] = best_t
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack[sp, 0] = lid
        stack[sp, 1] = lo
        stack[sp, 2] = mid
        sp += 1
        stack[sp, 0] = rid
        stack[sp, 1] = mid
        stack[sp, 2] = hi
        sp += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], count0[:n_nodes], count1[:n_nodes])


@njit(cache=True)
def _tree_votes(feature, threshold, left, right, count0, count1, X, votes):
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        if count1[node] > count0[node]:
            votes[r] += 1


_WARMED_UP = False


def warmup() -> None:
    """Force kernel compilation once (cheap after the numba cache is hot)."""
    global _WARMED_UP
    if _WARMED_UP:
        return
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1], dtype=np.int64)
    fit(X, y, ForestConfig(n_trees=1, seed=0))
    _WARMED_UP = True


def fit(X: np.ndarray, y: np.ndarray, config: ForestConfig) -> ForestModel:
    """Grow ``config.n_trees`` CART trees on bootstrap resamples of (X, y).

    ``y`` must be 0/1. A single-class ``y`` is accepted and yields constant
    single-leaf trees. Raises on empty input or non-finite feature values.
    """
    global _WARMED_UP
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("X must be a non-empty 2-d matrix")
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError("y length must match X rows")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")

    q = config.max_features if config.max_features is not None else math.isqrt(d - 1) + 1
    q = min(max(q, 1), d)

    trees = []
    for t in range(config.n_trees):
        if config.bootstrap:
            boot_rng = streams.spawn(config.seed, "tree", t, "boot")
            sample_idx = boot_rng.integers(0, n, size=n, dtype=np.int64)
        else:
            sample_idx = np.arange(n, dtype=np.int64)
        state = streams.key64(config.seed, "tree", t, "split")
        arrays = _grow_tree(X, y, sample_idx, q, config.min_samples_leaf, state)
        trees.append(Tree(*(a.copy() for a in arrays)))
    _WARMED_UP = True
    return ForestModel(trees=tuple(trees), n_features=d, config=config)


def predict(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Majority vote over trees; exact vote ties go to 0 (NT)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(
            f"X must have {model.n_features} columns, got "
            f"{X.shape[1] if X.ndim == 2 else 'non-2d input'}"
        )
    votes = np.zeros(X.shape[0], dtype=np.int64)
    for tree in model.trees:
        _tree_votes(tree.feature, tree.threshold, tree.left, tree.right,
                    tree.count0, tree.count1, X, votes)
    return (2 * votes > len(model.trees)).astype(np.int8)


def dump_model(model: ForestModel, path: str | os.PathLike) -> None:
    """Debug dump: one line per node with split/threshold/children/counts."""
    lines = [
        f"# random forest: {len(model.trees)} trees, {model.n_features} features, "
        f"seed {model.config.seed}\n"
    ]
    for t, tree in enumerate(model.trees):
        lines.append(f"tree {t} nodes {tree.n_nodes}\n")
        for i in range(tree.n_nodes):
            if tree.feature[i] < 0:
                lines.append(
                    f"  node {i} leaf label {tree.leaf_label(i)} "
                    f"counts {tree.count0[i]} {tree.count1[i]}\n"
                )
            else:
                lines.append(
                    f"  node {i} feature {tree.feature[i]} "
                    f"threshold {tree.threshold[i]!r} "
                    f"left {tree.left[i]} right {tree.right[i]} "
                    f"counts {tree.count0[i]} {tree.count1[i]}\n"
                )
    atomic_write_text(path, "".join(lines))
