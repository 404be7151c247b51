"""Synthetic multi-site dataset generation with planted informative features.

Informative columns are class-conditional Gaussians: class means sit at
±effect_size/2 and the per-site noise scale is the standard deviation, so the
class separation in SD units is effect_size / noise_scale. The remaining
columns are independent standard Gaussians. For a single informative feature
the Bayes-optimal accuracy is Φ(effect_size / (2 · noise_scale)), which
bounds any measured accuracy.

Per-site draws come from streams derived from (seed, site index), so sites
may be generated in any order or in parallel with identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import streams
from .tabular import FeatureTable, PhenotypeRecord, ScanParamsRecord


@dataclass(frozen=True)
class SynthConfig:
    """Dataset recipe; ``noise_scale`` is scalar or one value per site."""

    sizes: tuple[int, ...]
    d: int
    k_informative: int
    effect_size: float
    noise_scale: float | tuple[float, ...] = 1.0
    label_balance: float = 0.5
    seed: int = 0
    age_mean: float = 15.0
    age_std: float = 6.0
    female_fraction: float = 0.25
    eyes_closed_fraction: float = 0.3

    def __post_init__(self) -> None:
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if not self.sizes or any(s < 1 for s in self.sizes):
            raise ValueError("sizes must be a non-empty list of positive counts")
        if not 1 <= self.k_informative <= self.d:
            raise ValueError("k_informative must satisfy 1 <= k <= d")
        if self.effect_size < 0:
            raise ValueError("effect_size must be >= 0")
        if not 0 < self.label_balance < 1:
            raise ValueError("label_balance must be in (0, 1)")
        scales = self.site_noise_scales()
        if any(not s > 0 for s in scales):
            raise ValueError("noise_scale values must be > 0")

    @property
    def n_sites(self) -> int:
        return len(self.sizes)

    def site_noise_scales(self) -> tuple[float, ...]:
        if isinstance(self.noise_scale, (int, float)):
            return (float(self.noise_scale),) * self.n_sites
        scales = tuple(float(s) for s in self.noise_scale)
        if len(scales) != self.n_sites:
            raise ValueError("per-site noise_scale length must equal the site count")
        return scales


@dataclass(frozen=True)
class SiteProfile:
    """One site's slot in a size-quality schedule."""

    site_id: str
    size: int
    noise_scale: float


def site_name(index: int) -> str:
    return f"S{index + 1:02d}"


def generate(config: SynthConfig) -> tuple[
    FeatureTable, np.ndarray, dict[str, list[PhenotypeRecord]]
]:
    """Generate a dataset, its ground-truth informative mask, and phenotypes.

    Returns ``(table, truth_mask, phenotypes_by_site)``. The truth mask marks
    the planted informative columns. Output is a pure function of the config.
    """
    scales = config.site_noise_scales()
    mask_rng = streams.spawn(config.seed, "truth-mask")
    informative = np.sort(mask_rng.choice(config.d, size=config.k_informative, replace=False))
    truth_mask = np.zeros(config.d, dtype=np.uint8)
    truth_mask[informative] = 1

    subject_ids: list[str] = []
    site_ids: list[str] = []
    blocks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    phenotypes: dict[str, list[PhenotypeRecord]] = {}

    for i, (n_s, scale) in enumerate(zip(config.sizes, scales)):
        site = site_name(i)
        rng = streams.spawn(config.seed, "site", i)
        n_asd = int(round(config.label_balance * n_s))
        y = np.zeros(n_s, dtype=np.int8)
        y[:n_asd] = 1
        y = rng.permutation(y)

        X = rng.standard_normal((n_s, config.d))
        shift = np.where(y == 1, config.effect_size / 2.0, -config.effect_size / 2.0)
        X[:, informative] = X[:, informative] * scale + shift[:, None]

        ages = np.clip(rng.normal(config.age_mean, config.age_std, n_s), 4.0, 80.0)
        female = rng.random(n_s) < config.female_fraction
        closed = rng.random(n_s) < config.eyes_closed_fraction

        site_subjects = [f"{site}_{j:04d}" for j in range(n_s)]
        subject_ids += site_subjects
        site_ids += [site] * n_s
        blocks.append(X)
        labels.append(y)
        phenotypes[site] = [
            PhenotypeRecord(
                subject_id=site_subjects[j],
                age_at_scan=float(ages[j]),
                sex="female" if female[j] else "male",
                eye_status=2 if closed[j] else 1,
            )
            for j in range(n_s)
        ]

    table = FeatureTable(
        subject_ids=tuple(subject_ids),
        site_ids=tuple(site_ids),
        features=np.vstack(blocks),
        labels=np.concatenate(labels),
        feature_names=tuple(f"f_{j + 1}" for j in range(config.d)),
    )
    return table, truth_mask, phenotypes


def generate_size_quality_study(
    n_sites: int,
    size_range: tuple[int, int],
    quality_slope: float,
    seed: int,
    d: int = 20,
    k_informative: int = 3,
    effect_size: float = 4.0,
    base_noise: float = 1.0,
    label_balance: float = 0.5,
) -> tuple[FeatureTable, np.ndarray, dict[str, list[PhenotypeRecord]], list[SiteProfile]]:
    """Multi-site dataset whose per-site noise grows with site size.

    Site sizes are evenly spread over ``size_range`` and each site's noise
    scale is ``base_noise * (1 + quality_slope * normalized_size)`` with
    normalized_size in [0, 1]. With a positive slope, larger sites carry
    noisier informative features, so downstream accuracy correlates
    negatively with data size; with slope 0 all sites share one noise level.
    Returns the dataset plus the schedule actually used.
    """
    lo, hi = int(size_range[0]), int(size_range[1])
    if lo < 1 or hi < lo:
        raise ValueError("size_range must satisfy 1 <= lo <= hi")
    if lo == hi and quality_slope != 0:
        raise ValueError("degenerate size_range (all sites equal) with nonzero quality_slope")
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")

    sizes = np.rint(np.linspace(lo, hi, n_sites)).astype(int) if n_sites > 1 else np.array([lo])
    span = hi - lo
    normalized = (sizes - lo) / span if span > 0 else np.zeros(n_sites)
    scales = base_noise * (1.0 + quality_slope * normalized)
    if np.any(scales <= 0):
        raise ValueError("quality_slope drives noise_scale non-positive")

    config = SynthConfig(
        sizes=tuple(int(s) for s in sizes),
        d=d,
        k_informative=k_informative,
        effect_size=effect_size,
        noise_scale=tuple(float(s) for s in scales),
        label_balance=label_balance,
        seed=seed,
    )
    table, truth_mask, phenotypes = generate(config)
    schedule = [
        SiteProfile(site_name(i), int(sizes[i]), float(scales[i]))
        for i in range(n_sites)
    ]
    return table, truth_mask, phenotypes, schedule


_VENDOR_POOL = (
    "Siemens Magnetom TrioTim",
    "Siemens Magnetom Verio",
    "Siemens Magnetom Allegra",
    "Philips Achieva 3T",
    "Philips Intera 3T",
    "General Electric Signa 3T",
    "General Electric Discovery MR750 3T",
)


def synth_scan_params(site_ids: list[str], seed: int) -> list[ScanParamsRecord]:
    """Plausible per-site scan parameters so synthetic runs can feed the
    scan-condition embedding; TR/TI are occasionally absent, TE/FA never."""
    records = []
    for i, site in enumerate(site_ids):
        rng = streams.spawn(seed, "scan", i)
        vendor = _VENDOR_POOL[int(rng.integers(len(_VENDOR_POOL)))]
        te = float(np.round(rng.uniform(1.5e-3, 4.6e-3), 5))
        fa = float(rng.integers(7, 16))
        tr = None if rng.random() < 0.10 else float(np.round(rng.uniform(1.2, 2.6), 2))
        ti = None if rng.random() < 0.15 else float(np.round(rng.uniform(0.6, 1.1), 2))
        records.append(ScanParamsRecord(site, vendor, tr, te, ti, fa))
    return records
