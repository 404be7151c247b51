"""Tabular data model: feature tables, phenotype and scan-parameter records.

All files are comma-separated UTF-8 with a single header row. Lines whose
first cell starts with ``#`` are metadata comments and are skipped on read.
The literal ``NA`` (case-insensitive) marks a missing value in columns that
allow one; feature cells never do.

Schemas::

    features    SUB_ID,SITE_ID,DX_GROUP,<f_1>,...,<f_d>
    phenotypes  SUB_ID,AGE_AT_SCAN,SEX,EYE_STATUS_AT_SCAN
    scan params SITE_ID,VENDOR,TR_SEC,TE_SEC,TI_SEC,FA_DEG

Diagnosis labels are the strings ``ASD`` / ``NT`` in files and the integers
1 / 0 internally.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .fileio import atomic_write_text, format_cell, metadata_comments

LABEL_NT = 0
LABEL_ASD = 1
LABEL_NAMES = ("NT", "ASD")  # index == internal label value

FEATURE_KEY_COLUMNS = ("SUB_ID", "SITE_ID", "DX_GROUP")
PHENOTYPE_COLUMNS = ("SUB_ID", "AGE_AT_SCAN", "SEX", "EYE_STATUS_AT_SCAN")
SCAN_COLUMNS = ("SITE_ID", "VENDOR", "TR_SEC", "TE_SEC", "TI_SEC", "FA_DEG")


class TableFormatError(ValueError):
    """A file violates its schema; messages carry row/column coordinates."""


class DataWarning(UserWarning):
    """Non-fatal data-quality issue (dropped rows, undefined statistics)."""


@dataclass(frozen=True)
class FeatureTable:
    """Immutable subjects-by-features matrix with labels and site identifiers.

    Parallel fields all have length ``n``; ``features`` is an ``(n, d)``
    float matrix whose entries are finite. Instances are validated on
    construction and their arrays are frozen, so tables are safe to share
    across threads and processes.
    """

    subject_ids: tuple[str, ...]
    site_ids: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))
        object.__setattr__(self, "site_ids", tuple(str(s) for s in self.site_ids))
        object.__setattr__(self, "feature_names", tuple(str(s) for s in self.feature_names))
        features = np.array(self.features, dtype=np.float64, order="C", copy=True)
        labels = np.array(self.labels, dtype=np.int8, copy=True)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n, d = features.shape
        if n < 1 or d < 1:
            raise ValueError("feature table must have at least one row and one column")
        if len(self.subject_ids) != n or len(self.site_ids) != n or labels.shape != (n,):
            raise ValueError("subject_ids, site_ids, labels and features disagree on n")
        if len(self.feature_names) != d:
            raise ValueError("feature_names length does not match feature count")
        if not np.isfinite(features).all():
            bad = np.argwhere(~np.isfinite(features))[0]
            raise ValueError(f"non-finite feature value at row {bad[0]}, column {bad[1]}")
        if not np.isin(labels, (LABEL_NT, LABEL_ASD)).all():
            raise ValueError("labels must be 0 (NT) or 1 (ASD)")
        if len(set(self.subject_ids)) != n:
            raise ValueError("duplicate subject ids")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PhenotypeRecord:
    """One subject's phenotype: age in years, sex, and resting eye status
    (1 = open, 2 = closed)."""

    subject_id: str
    age_at_scan: float
    sex: str
    eye_status: int

    def __post_init__(self) -> None:
        if not self.age_at_scan > 0:
            raise ValueError(f"age_at_scan must be > 0, got {self.age_at_scan}")
        if self.sex not in ("female", "male"):
            raise ValueError(f"sex must be 'female' or 'male', got {self.sex!r}")
        if self.eye_status not in (1, 2):
            raise ValueError(f"eye_status must be 1 or 2, got {self.eye_status}")


@dataclass(frozen=True)
class ScanParamsRecord:
    """One site's acquisition parameters; missing numeric fields are None."""

    site_id: str
    vendor: str
    tr_sec: float | None
    te_sec: float | None
    ti_sec: float | None
    fa_deg: float | None

    def __post_init__(self) -> None:
        for name in ("tr_sec", "te_sec", "ti_sec", "fa_deg"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")


# -- mask helpers --------------------------------------------------------

def as_mask(bits: Sequence[int] | np.ndarray, d: int | None = None) -> np.ndarray:
    """Validate and normalise a binary mask to a uint8 vector."""
    mask = np.asarray(bits)
    if mask.ndim != 1:
        raise ValueError("mask must be a 1-d binary vector")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    if d is not None and mask.shape[0] != d:
        raise ValueError(f"mask length {mask.shape[0]} does not match dimension {d}")
    return mask.astype(np.uint8)


def popcount(mask: np.ndarray) -> int:
    return int(np.sum(mask != 0))


def mask_to_string(mask: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in mask)


def mask_from_string(text: str) -> np.ndarray:
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"mask string must be non-empty over {{0,1}}, got {text!r}")
    return np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")


def restrict_mask(mask: np.ndarray, within: np.ndarray) -> np.ndarray:
    """Sample ``mask`` at the set positions of ``within`` (sub-space view)."""
    mask = as_mask(mask)
    within = as_mask(within, d=mask.shape[0])
    return mask[within == 1]


def lift_mask(sub_mask: np.ndarray, within: np.ndarray) -> np.ndarray:
    """Place a sub-space mask back at the set positions of ``within``."""
    within = as_mask(within)
    sub_mask = as_mask(sub_mask, d=popcount(within))
    lifted = np.zeros(within.shape[0], dtype=np.uint8)
    lifted[np.flatnonzero(within)] = sub_mask
    return lifted


# -- table operations ----------------------------------------------------

def apply_mask(table: FeatureTable, mask: Sequence[int] | np.ndarray) -> FeatureTable:
    """Restrict a table to the columns at the mask's set bits (order kept)."""
    mask = as_mask(mask, d=table.d)
    if popcount(mask) == 0:
        raise ValueError("mask selects no features")
    keep = np.flatnonzero(mask)
    return FeatureTable(
        subject_ids=table.subject_ids,
        site_ids=table.site_ids,
        features=table.features[:, keep],
        labels=table.labels,
        feature_names=tuple(table.feature_names[i] for i in keep),
    )


def take_rows(table: FeatureTable, indices: Sequence[int] | np.ndarray) -> FeatureTable:
    """Row subset in the given index order."""
    idx = np.asarray(indices, dtype=np.intp)
    return FeatureTable(
        subject_ids=tuple(table.subject_ids[i] for i in idx),
        site_ids=tuple(table.site_ids[i] for i in idx),
        features=table.features[idx],
        labels=table.labels[idx],
        feature_names=table.feature_names,
    )


def partition_by_site(table: FeatureTable) -> dict[str, FeatureTable]:
    """Split into per-site tables, sites ordered by first appearance."""
    groups: dict[str, list[int]] = {}
    for i, site in enumerate(table.site_ids):
        groups.setdefault(site, []).append(i)
    return {site: take_rows(table, idx) for site, idx in groups.items()}


# -- CSV ingestion -------------------------------------------------------

def _data_rows(path: str | os.PathLike) -> Iterator[tuple[int, list[str]]]:
    """Yield (1-based line number, stripped cells), skipping comments/blanks."""
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not any(cell.strip() for cell in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            yield lineno, [cell.strip() for cell in row]


def _read_table_file(path: str | os.PathLike, required: Sequence[str],
                     exact_width: bool) -> tuple[list[str], list[tuple[int, list[str]]]]:
    rows = list(_data_rows(path))
    if not rows:
        raise TableFormatError(f"{path}: empty file")
    header_line, header = rows[0]
    for pos, name in enumerate(required):
        if pos >= len(header) or header[pos] != name:
            raise TableFormatError(
                f"{path}: line {header_line}: expected column {pos + 1} to be "
                f"{name!r}, got {header[pos] if pos < len(header) else 'nothing'!r}"
            )
    if exact_width and len(header) != len(required):
        raise TableFormatError(
            f"{path}: line {header_line}: expected exactly columns "
            f"{','.join(required)}"
        )
    body = rows[1:]
    for lineno, cells in body:
        if len(cells) != len(header):
            raise TableFormatError(
                f"{path}: line {lineno}: has {len(cells)} cells, header has {len(header)}"
            )
    return header, body


def _parse_float(path, lineno: int, column: str, cell: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise TableFormatError(
            f"{path}: line {lineno}: column {column}: not a number: {cell!r}"
        ) from None
    if not math.isfinite(value):
        raise TableFormatError(
            f"{path}: line {lineno}: column {column}: non-finite value {cell!r}"
        )
    return value


def _is_na(cell: str) -> bool:
    return cell.upper() == "NA"


def load_feature_table(path: str | os.PathLike) -> FeatureTable:
    """Load and validate a features file.

    Raises :class:`TableFormatError` with the offending line and column for
    any schema violation (missing columns, non-numeric cells, unknown
    DX_GROUP values, duplicate subjects, empty file).
    """
    header, body = _read_table_file(path, FEATURE_KEY_COLUMNS, exact_width=False)
    feature_names = header[len(FEATURE_KEY_COLUMNS):]
    if not feature_names:
        raise TableFormatError(f"{path}: header declares no feature columns")
    if not body:
        raise TableFormatError(f"{path}: no data rows")

    subject_ids: list[str] = []
    site_ids: list[str] = []
    labels: list[int] = []
    features = np.empty((len(body), len(feature_names)), dtype=np.float64)
    seen: dict[str, int] = {}
    for r, (lineno, cells) in enumerate(body):
        sub, site, dx = cells[0], cells[1], cells[2]
        if not sub:
            raise TableFormatError(f"{path}: line {lineno}: column SUB_ID: empty")
        if sub in seen:
            raise TableFormatError(
                f"{path}: line {lineno}: column SUB_ID: duplicate subject {sub!r} "
                f"(first seen at line {seen[sub]})"
            )
        seen[sub] = lineno
        if dx not in LABEL_NAMES:
            raise TableFormatError(
                f"{path}: line {lineno}: column DX_GROUP: unknown label {dx!r} "
                f"(expected ASD or NT)"
            )
        subject_ids.append(sub)
        site_ids.append(site)
        labels.append(LABEL_NAMES.index(dx))
        for c, name in enumerate(feature_names):
            features[r, c] = _parse_float(path, lineno, name, cells[3 + c])
    return FeatureTable(
        subject_ids=tuple(subject_ids),
        site_ids=tuple(site_ids),
        features=features,
        labels=np.asarray(labels, dtype=np.int8),
        feature_names=tuple(feature_names),
    )


def save_feature_table(table: FeatureTable, path: str | os.PathLike,
                       meta: Mapping[str, object] | None = None) -> None:
    """Write a features file; ``load_feature_table`` round-trips it exactly."""
    lines = [metadata_comments(meta)]
    lines.append(",".join(FEATURE_KEY_COLUMNS + table.feature_names) + "\n")
    for i in range(table.n):
        cells = [table.subject_ids[i], table.site_ids[i], LABEL_NAMES[table.labels[i]]]
        cells += [repr(float(v)) for v in table.features[i]]
        lines.append(",".join(cells) + "\n")
    atomic_write_text(path, "".join(lines))


def load_phenotypes(path: str | os.PathLike) -> list[PhenotypeRecord]:
    """Load a phenotypes file (no missing values permitted in any column)."""
    _, body = _read_table_file(path, PHENOTYPE_COLUMNS, exact_width=True)
    records = []
    for lineno, cells in body:
        age = _parse_float(path, lineno, "AGE_AT_SCAN", cells[1])
        sex = cells[2].lower()
        try:
            eye = int(cells[3])
        except ValueError:
            raise TableFormatError(
                f"{path}: line {lineno}: column EYE_STATUS_AT_SCAN: "
                f"not an integer: {cells[3]!r}"
            ) from None
        try:
            records.append(PhenotypeRecord(cells[0], age, sex, eye))
        except ValueError as exc:
            raise TableFormatError(f"{path}: line {lineno}: {exc}") from None
    return records


def save_phenotypes(records: Sequence[PhenotypeRecord], path: str | os.PathLike,
                    meta: Mapping[str, object] | None = None) -> None:
    lines = [metadata_comments(meta), ",".join(PHENOTYPE_COLUMNS) + "\n"]
    for rec in records:
        lines.append(
            f"{rec.subject_id},{repr(float(rec.age_at_scan))},{rec.sex},{rec.eye_status}\n"
        )
    atomic_write_text(path, "".join(lines))


def load_scan_params(path: str | os.PathLike) -> list[ScanParamsRecord]:
    """Load a scan-parameters file; NA cells in TR/TE/TI/FA parse as absent."""
    _, body = _read_table_file(path, SCAN_COLUMNS, exact_width=True)
    records = []
    for lineno, cells in body:
        values: dict[str, float | None] = {}
        for column, cell in zip(SCAN_COLUMNS[2:], cells[2:]):
            values[column] = None if _is_na(cell) else _parse_float(path, lineno, column, cell)
        try:
            records.append(ScanParamsRecord(
                site_id=cells[0],
                vendor=cells[1],
                tr_sec=values["TR_SEC"],
                te_sec=values["TE_SEC"],
                ti_sec=values["TI_SEC"],
                fa_deg=values["FA_DEG"],
            ))
        except ValueError as exc:
            raise TableFormatError(f"{path}: line {lineno}: {exc}") from None
    return records


def save_scan_params(records: Sequence[ScanParamsRecord], path: str | os.PathLike,
                     meta: Mapping[str, object] | None = None) -> None:
    lines = [metadata_comments(meta), ",".join(SCAN_COLUMNS) + "\n"]
    for rec in records:
        cells = [rec.site_id, rec.vendor] + [
            format_cell(v) for v in (rec.tr_sec, rec.te_sec, rec.ti_sec, rec.fa_deg)
        ]
        lines.append(",".join(cells) + "\n")
    atomic_write_text(path, "".join(lines))
