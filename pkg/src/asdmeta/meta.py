"""Meta-data statistics: phenotype summaries, bootstrap subsampling of site
accuracy, and Pearson correlation with two-sided p-values.

Bootstrapping here means repeated subsampling WITHOUT replacement (default
50% of a site, 50 times): drawing with replacement would duplicate subjects
across CV folds and leak. Age spread uses the sample divisor (n-1); the
female/male ratio is undefined when a sample has no males and such rows are
excluded from correlation with a warning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import cv, forest, parallel, streams, tabular
from .tabular import DataWarning, FeatureTable, PhenotypeRecord

PHENOTYPE_METRICS = ("data_size", "mean_age", "age_std", "fm_ratio", "eye_median")


class ConstantInputError(ValueError):
    """Correlation is undefined because one input has zero variance."""


@dataclass(frozen=True)
class SiteStats:
    """Per-(sub)sample phenotype statistics of the ASD group plus the
    accuracy measured on the same (sub)sample. ``n`` is the full sample size
    (both classes); ``fm_ratio`` is None when undefined (no males)."""

    site_id: str
    n: int
    mean_age: float
    std_age: float
    fm_ratio: float | None
    eye_median: float
    accuracy: float

    def metric(self, name: str) -> float | None:
        if name == "data_size":
            return float(self.n)
        if name not in PHENOTYPE_METRICS:
            raise KeyError(name)
        return getattr(self, {"mean_age": "mean_age", "age_std": "std_age",
                              "fm_ratio": "fm_ratio", "eye_median": "eye_median"}[name])


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p_value: float
    n: int


def pearson_r(x: Sequence[float] | np.ndarray, y: Sequence[float] | np.ndarray) -> float:
    """Σ(xᵢ-x̄)(yᵢ-ȳ) / sqrt(Σ(xᵢ-x̄)² Σ(yᵢ-ȳ)²)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    n = x.shape[0]
    if n < 3:
        raise ValueError("correlation needs at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInputError("correlation undefined for constant input")
    return float(np.dot(dx, dy) / math.sqrt(sxx * syy))


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_cf(a: float, b: float, x: float, tol: float = 1e-12, max_iter: int = 300) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def _reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(a * math.log(x) + b * math.log(1.0 - x) - _log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def pearson_p(r: float, n: int) -> float:
    """Two-sided p-value for the null of zero correlation.

    t = r sqrt((n-2)/(1-r²)) follows Student-t with n-2 degrees of freedom
    under the null; p = 2(1 - CDF(|t|)) evaluated through the regularized
    incomplete beta identity p = I_{v/(v+t²)}(v/2, 1/2).
    """
    if n < 3:
        raise ValueError("p-value needs n >= 3")
    if not -1.0 <= r <= 1.0:
        raise ValueError("r must lie in [-1, 1]")
    if abs(r) == 1.0:
        return 0.0
    dof = n - 2
    t2 = r * r * dof / (1.0 - r * r)
    p = _reg_inc_beta(dof / 2.0, 0.5, dof / (dof + t2))
    return min(max(p, 0.0), 1.0)


def phenotype_stats(
    records: Sequence[PhenotypeRecord],
    accuracy: float,
    site_id: str = "",
    data_size: int | None = None,
) -> SiteStats:
    """Summarise one ASD-group sample: mean/std age, female/male count ratio,
    median eye status. ``data_size`` defaults to len(records) but callers
    summarising a subsample should pass the full subsample size."""
    if not records:
        raise ValueError("phenotype_stats needs at least one record")
    ages = np.array([rec.age_at_scan for rec in records], dtype=np.float64)
    n_female = sum(1 for rec in records if rec.sex == "female")
    n_male = len(records) - n_female
    if n_male == 0:
        warnings.warn(
            f"site {site_id or '?'}: no males in sample; female/male ratio undefined",
            DataWarning, stacklevel=2)
        fm_ratio = None
    else:
        fm_ratio = n_female / n_male
    eyes = sorted(rec.eye_status for rec in records)
    mid = len(eyes) // 2
    eye_median = float(eyes[mid]) if len(eyes) % 2 else (eyes[mid - 1] + eyes[mid]) / 2.0
    std_age = float(ages.std(ddof=1)) if len(ages) > 1 else 0.0
    return SiteStats(
        site_id=site_id,
        n=data_size if data_size is not None else len(records),
        mean_age=float(ages.mean()),
        std_age=std_age,
        fm_ratio=fm_ratio,
        eye_median=eye_median,
        accuracy=float(accuracy),
    )


# -- bootstrap replicates (optionally across processes) -------------------

_CTX: dict = {}


def _init_bootstrap_worker(site_table, phen_map, mask, fcfg, k, frac, seed, site_id):
    _CTX.update(site_table=site_table, phen_map=phen_map, mask=mask, fcfg=fcfg,
                k=k, frac=frac, seed=seed, site_id=site_id)
    forest.warmup()


def _bootstrap_task(b: int):
    site_table: FeatureTable = _CTX["site_table"]
    n = site_table.n
    m = math.ceil(_CTX["frac"] * n)
    rng = streams.spawn(_CTX["seed"], "replicate", b)
    chosen = rng.permutation(n)[:m]
    sub = tabular.take_rows(site_table, chosen)
    asd_records = [_CTX["phen_map"][sid]
                   for sid, label in zip(sub.subject_ids, sub.labels) if label == 1]
    if not asd_records:
        return b, None
    result = cv.cv_accuracy(sub, _CTX["mask"], _CTX["fcfg"], _CTX["k"],
                            streams.derive(_CTX["seed"], "replicate", b, "cv"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataWarning)  # re-raised site-wide by caller
        stats = phenotype_stats(asd_records, result.mean,
                                site_id=_CTX["site_id"], data_size=m)
    return b, stats


def bootstrap_site(
    site_table: FeatureTable,
    site_phenotypes: Sequence[PhenotypeRecord],
    mask: np.ndarray,
    b_replicates: int = 50,
    frac: float = 0.5,
    fcfg: forest.ForestConfig = forest.ForestConfig(),
    k: int = 3,
    seed: int = 0,
    threads: int = 1,
) -> list[SiteStats]:
    """Repeatedly subsample ceil(frac*n) subjects without replacement and
    score each subsample: CV accuracy on the masked features, phenotype
    statistics on the subsample's ASD members.

    Replicates with no ASD members are skipped with a warning. Replicates
    derive their streams from (seed, replicate index), so any execution order
    or worker count produces the same list.
    """
    if b_replicates < 1:
        raise ValueError("b_replicates must be >= 1")
    if not 0 < frac <= 1:
        raise ValueError("frac must be in (0, 1]")
    n = site_table.n
    m = math.ceil(frac * n)
    if m < k:
        raise ValueError(f"subsample of {m} cannot support {k}-fold CV")
    phen_map = {rec.subject_id: rec for rec in site_phenotypes}
    missing = [sid for sid in site_table.subject_ids if sid not in phen_map]
    if missing:
        raise ValueError(f"phenotypes missing for subjects: {missing[:5]}")
    site_id = site_table.site_ids[0] if site_table.site_ids else ""
    mask = tabular.as_mask(mask, d=site_table.d)

    outcomes = parallel.pmap(
        _bootstrap_task, list(range(b_replicates)), threads,
        initializer=_init_bootstrap_worker,
        initargs=(site_table, phen_map, mask, fcfg, k, frac, seed, site_id),
    )
    stats_list = []
    for b, stats in outcomes:
        if stats is None:
            warnings.warn(
                f"site {site_id}: replicate {b} has no ASD members; skipped",
                DataWarning, stacklevel=2)
            continue
        if stats.fm_ratio is None:
            warnings.warn(
                f"site {site_id}: replicate {b} has no males; "
                f"female/male ratio undefined", DataWarning, stacklevel=2)
        stats_list.append(stats)
    return stats_list


def correlate(pairs: Iterable[tuple[float | None, float]]) -> CorrelationResult:
    """Pearson r and p over (metric, accuracy) pairs, dropping pairs whose
    metric is flagged undefined (None)."""
    kept = [(float(m), float(a)) for m, a in pairs if m is not None]
    if len(kept) < 3:
        raise ValueError(f"need at least 3 valid pairs, got {len(kept)}")
    metric = np.array([m for m, _ in kept])
    acc = np.array([a for _, a in kept])
    r = pearson_r(metric, acc)
    return CorrelationResult(r=r, p_value=pearson_p(r, len(kept)), n=len(kept))
