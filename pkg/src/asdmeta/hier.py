"""Hierarchical feature selection: repeated GA rounds on the surviving
feature subset until the best CV accuracy stops improving.

Round 0 is always the all-features baseline. Round r >= 1 runs the GA on the
table restricted to round r-1's mask and lifts the winning sub-mask back to
the original d-dimensional indexing, so masks are nested across rounds. The
driver stops as soon as a round improves on the previous GA round by less
than epsilon (round 1 has no prior GA round, so it can never trigger the
stop), or when max_rounds is reached.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from . import cv, forest, ga, streams, tabular
from .fileio import write_csv


@dataclass(frozen=True)
class SelectionRound:
    """One round's winning mask (original indexing) and its CV fitness."""

    mask: np.ndarray
    fitness: cv.CVResult


@dataclass(frozen=True)
class RoundHistory:
    rounds: tuple[SelectionRound, ...]  # rounds[0] is the all-features baseline
    converged: bool
    rounds_run: int

    @property
    def final_mask(self) -> np.ndarray:
        return self.rounds[-1].mask


@dataclass(frozen=True)
class ReportRow:
    site_id: str
    data_size: int
    round_index: int
    acc_mean: float
    acc_std: float


REPORT_COLUMNS = ["SITE_ID", "DATA_SIZE", "ROUND", "ACC_MEAN", "ACC_STD"]


def run_rounds(
    table: tabular.FeatureTable,
    gacfg: ga.GAConfig,
    fcfg: forest.ForestConfig,
    k: int = 3,
    epsilon: float = 0.01,
    max_rounds: int = 5,
    threads: int = 1,
) -> RoundHistory:
    """Drive GA rounds on one table until convergence or max_rounds."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")

    all_features = np.ones(table.d, dtype=np.uint8)
    baseline = cv.cv_accuracy(
        table, all_features, fcfg, k, streams.derive(gacfg.seed, "baseline"))
    rounds = [SelectionRound(all_features, baseline)]

    current_mask = all_features
    previous_best: float | None = None
    converged = False
    rounds_run = 0
    for r in range(1, max_rounds + 1):
        sub_table = tabular.apply_mask(table, current_mask)
        round_cfg = replace(gacfg, seed=streams.derive(gacfg.seed, "round", r))
        result = ga.evolve(sub_table, round_cfg, fcfg, k, threads=threads)
        lifted = tabular.lift_mask(result.best_mask, current_mask)
        rounds.append(SelectionRound(lifted, result.best_fitness))
        rounds_run = r
        if previous_best is not None and result.best_fitness.mean - previous_best < epsilon:
            converged = True
            break
        previous_best = result.best_fitness.mean
        current_mask = lifted
    return RoundHistory(tuple(rounds), converged, rounds_run)


def run_rounds_by_site(
    table: tabular.FeatureTable,
    gacfg: ga.GAConfig,
    fcfg: forest.ForestConfig,
    k: int = 3,
    epsilon: float = 0.01,
    max_rounds: int = 5,
    threads: int = 1,
) -> dict[str, RoundHistory]:
    """Independent per-site drivers with seeds derived from (seed, site id)."""
    histories = {}
    for site, site_table in tabular.partition_by_site(table).items():
        site_cfg = replace(gacfg, seed=streams.derive(gacfg.seed, "site", site))
        histories[site] = run_rounds(
            site_table, site_cfg, fcfg, k, epsilon, max_rounds, threads=threads)
    return histories


def site_wise_eval(
    table: tabular.FeatureTable,
    histories: Mapping[str, RoundHistory],
) -> list[ReportRow]:
    """One report row per site per round, round 0 being the baseline."""
    partitions = tabular.partition_by_site(table)
    rows = []
    for site, site_table in partitions.items():
        if site not in histories:
            raise ValueError(f"no round history for site {site!r}")
        for r, rnd in enumerate(histories[site].rounds):
            rows.append(ReportRow(site, site_table.n, r,
                                  rnd.fitness.mean, rnd.fitness.std))
    return rows


def write_site_report(rows: list[ReportRow], path, meta=None) -> None:
    write_csv(path, REPORT_COLUMNS,
              [[r.site_id, r.data_size, r.round_index, r.acc_mean, r.acc_std]
               for r in rows],
              meta=meta)


def read_site_report(path) -> list[ReportRow]:
    rows = []
    body = list(tabular._data_rows(path))
    if not body or body[0][1] != REPORT_COLUMNS:
        raise tabular.TableFormatError(f"{path}: not a site report file")
    for lineno, cells in body[1:]:
        if len(cells) != len(REPORT_COLUMNS):
            raise tabular.TableFormatError(f"{path}: line {lineno}: bad cell count")
        rows.append(ReportRow(cells[0], int(cells[1]), int(cells[2]),
                              float(cells[3]), float(cells[4])))
    return rows


def history_to_dict(history: RoundHistory) -> dict:
    return {
        "rounds": [
            {
                "round": r,
                "mask": tabular.mask_to_string(rnd.mask),
                "fold_accuracies": list(rnd.fitness.fold_accuracies),
                "mean": rnd.fitness.mean,
                "std": rnd.fitness.std,
            }
            for r, rnd in enumerate(history.rounds)
        ],
        "converged": history.converged,
        "rounds_run": history.rounds_run,
    }


def history_from_dict(payload: dict) -> RoundHistory:
    rounds = tuple(
        SelectionRound(
            tabular.mask_from_string(entry["mask"]),
            cv.CVResult(tuple(entry["fold_accuracies"]), entry["mean"], entry["std"]),
        )
        for entry in payload["rounds"]
    )
    return RoundHistory(rounds, bool(payload["converged"]), int(payload["rounds_run"]))
