"""Scan-condition encoding and exact t-SNE projection to 2-D.

Scanner vendor strings are dictionary-encoded in order of first appearance
and concatenated with echo time (TE) and flip angle (FA) into per-site
3-vectors; TR and TI are excluded because sites leave them missing. The
vectors should be standardized before embedding: TE lives around 1e-3, FA
around 10, vendor codes around single digits, so unscaled distances would be
blind to TE.

The t-SNE here is the exact O(N²) algorithm: per-point Gaussian bandwidths
found by bisection to match log(perplexity) in entropy, symmetrized
affinities, Student-t(1) low-dimensional kernel, and momentum gradient
descent with early exaggeration. N is tens of points, so nothing is
approximated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import streams
from .tabular import DataWarning, ScanParamsRecord

_AFFINITY_FLOOR = 1e-12
_ENTROPY_TOL = 1e-5


@dataclass(frozen=True)
class ScanVector:
    site_id: str
    vendor_code: int
    te_sec: float
    fa_deg: float


@dataclass(frozen=True)
class EmbeddingConfig:
    perplexity: float = 5.0
    iterations: int = 1000
    learning_rate: float = 100.0
    early_exaggeration: float = 4.0
    exaggeration_iters: int = 100
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    seed: int = 0

    def __post_init__(self) -> None:
        if self.perplexity <= 0:
            raise ValueError("perplexity must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def encode_scan_conditions(records: Sequence[ScanParamsRecord]) -> list[ScanVector]:
    """Assemble (vendor code, TE, FA) vectors; vendor codes follow first
    appearance in the input. Sites missing TE or FA are dropped with a
    warning; an error is raised if nothing survives."""
    if not records:
        raise ValueError("no scan-parameter records")
    codes: dict[str, int] = {}
    for rec in records:
        codes.setdefault(rec.vendor, len(codes))
    vectors = []
    for rec in records:
        if rec.te_sec is None or rec.fa_deg is None:
            missing = [name for name, v in (("TE", rec.te_sec), ("FA", rec.fa_deg))
                       if v is None]
            warnings.warn(
                f"site {rec.site_id}: missing {'/'.join(missing)}; "
                f"excluded from scan-condition embedding",
                DataWarning, stacklevel=2)
            continue
        vectors.append(ScanVector(rec.site_id, codes[rec.vendor],
                                  rec.te_sec, rec.fa_deg))
    if not vectors:
        raise ValueError("all sites lack TE or FA; nothing to embed")
    return vectors


def scan_matrix(vectors: Sequence[ScanVector]) -> np.ndarray:
    return np.array([[v.vendor_code, v.te_sec, v.fa_deg] for v in vectors],
                    dtype=np.float64)


def standardize(matrix: np.ndarray) -> np.ndarray:
    """Z-score each column (population std). Constant columns come out as
    zeros with a warning rather than dividing by zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValueError("standardize needs an (N >= 2) x m matrix")
    centered = matrix - matrix.mean(axis=0)
    std = matrix.std(axis=0)
    constant = std == 0
    if constant.any():
        warnings.warn(
            f"columns {np.flatnonzero(constant).tolist()} are constant; "
            f"standardized to zeros", DataWarning, stacklevel=2)
    std = np.where(constant, 1.0, std)
    return centered / std


def _squared_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _row_affinities(d2_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Affinities and entropy (nats) for one point at precision beta."""
    logits = -beta * d2_row
    mx = logits.max()
    w = np.exp(logits - mx)
    total = w.sum()
    p = w / total
    log_total = mx + math.log(total)
    entropy = log_total + beta * float(np.dot(p, d2_row))
    return p, entropy


def conditional_affinities(points: np.ndarray, perplexity: float
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Per-point conditional affinities with bandwidths bisected so each
    row's entropy equals log(perplexity) within 1e-5."""
    n = points.shape[0]
    target = math.log(perplexity)
    P = np.zeros((n, n))
    entropies = np.zeros(n)
    d2 = _squared_distances(points)
    others = np.arange(n)
    for i in range(n):
        sel = others != i
        row = d2[i, sel]
        beta, lo, hi = 1.0, 0.0, math.inf
        p, entropy = _row_affinities(row, beta)
        for _ in range(1000):
            if abs(entropy - target) <= _ENTROPY_TOL:
                break
            if entropy > target:  # too flat: sharpen
                lo = beta
                beta = beta * 2.0 if math.isinf(hi) else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == 0.0 else (beta + lo) / 2.0
            p, entropy = _row_affinities(row, beta)
        P[i, sel] = p
        entropies[i] = entropy
    return P, entropies


def joint_affinities(points: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinities: non-negative, zero diagonal, summing to 1."""
    cond, _ = conditional_affinities(points, perplexity)
    return (cond + cond.T) / (2.0 * points.shape[0])


def kl_and_grad(P: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P || Q(Y)) and its gradient under the Student-t(1) kernel.

    Affinities are clamped at 1e-12 inside the logs only, so the gradient is
    the exact derivative of the returned objective away from the floor.
    """
    d2 = _squared_distances(Y)
    w = 1.0 / (1.0 + d2)
    np.fill_diagonal(w, 0.0)
    total = w.sum()
    Q = w / total
    mask = ~np.eye(P.shape[0], dtype=bool)
    p = np.maximum(P[mask], _AFFINITY_FLOOR)
    q = np.maximum(Q[mask], _AFFINITY_FLOOR)
    kl = float(np.sum(P[mask] * (np.log(p) - np.log(q))))
    pq = (P - Q) * w
    grad = 4.0 * (np.diag(pq.sum(axis=1)) - pq) @ Y
    return kl, grad


def _jitter_duplicates(points: np.ndarray, seed: int) -> np.ndarray:
    """Displace exact duplicate rows by ~1e-9 so bandwidths stay finite."""
    seen: dict[bytes, int] = {}
    dup_rows = []
    for i in range(points.shape[0]):
        key = points[i].tobytes()
        if key in seen:
            dup_rows.append(i)
        else:
            seen[key] = i
    if not dup_rows:
        return points
    jittered = points.copy()
    rng = streams.spawn(seed, "jitter")
    jittered[dup_rows] += rng.normal(0.0, 1e-9, size=(len(dup_rows), points.shape[1]))
    return jittered


def tsne(points: np.ndarray, config: EmbeddingConfig
         ) -> tuple[np.ndarray, np.ndarray]:
    """Embed N points into 2-D; returns (coordinates, per-iteration KL).

    The KL history is always measured against the un-exaggerated affinities
    so early and late iterations are comparable.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 4:
        raise ValueError("t-SNE needs an (N >= 4) x m matrix")
    n = points.shape[0]
    if config.perplexity >= (n - 1) / 3:
        raise ValueError(
            f"perplexity {config.perplexity} too large for {n} points "
            f"(needs perplexity < (N-1)/3)")

    points = _jitter_duplicates(points, config.seed)
    P = joint_affinities(points, config.perplexity)

    Y = streams.spawn(config.seed, "init").normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(Y)
    # per-coordinate gain adaptation: step sizes grow while a coordinate
    # keeps moving the same way and shrink when its gradient flips sign
    gains = np.ones_like(Y)
    kl_history = np.zeros(config.iterations)
    for it in range(config.iterations):
        if it < config.exaggeration_iters:
            _, grad = kl_and_grad(P * config.early_exaggeration, Y)
            kl_history[it] = kl_and_grad(P, Y)[0]
        else:
            kl_history[it], grad = kl_and_grad(P, Y)
        momentum = (config.momentum_start if it < config.momentum_switch
                    else config.momentum_final)
        same_direction = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_direction, gains * 0.8, gains + 0.2)
        np.clip(gains, 0.01, None, out=gains)
        velocity = momentum * velocity - config.learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
    return Y, kl_history
