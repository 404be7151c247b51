"""Matplotlib renderings of report artifacts, written next to the CSVs."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .hier import ReportRow  # noqa: E402
from .meta import CorrelationResult  # noqa: E402

_RC = {
    "figure.dpi": 140,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _save(fig, path) -> None:
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def _by_site(rows: Sequence[ReportRow]) -> dict[str, list[ReportRow]]:
    sites: dict[str, list[ReportRow]] = {}
    for row in rows:
        sites.setdefault(row.site_id, []).append(row)
    for entries in sites.values():
        entries.sort(key=lambda r: r.round_index)
    return sites


def site_accuracy_figure(rows: Sequence[ReportRow], path) -> None:
    """Per-site accuracy without selection vs the final selection round."""
    sites = _by_site(rows)
    names = list(sites)
    base = [sites[s][0].acc_mean for s in names]
    base_err = [sites[s][0].acc_std for s in names]
    last = [sites[s][-1].acc_mean for s in names]
    last_err = [sites[s][-1].acc_std for s in names]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(names)), 3.2))
        pos = range(len(names))
        width = 0.4
        ax.bar([p - width / 2 for p in pos], base, width, yerr=base_err,
               capsize=2, label="all features")
        ax.bar([p + width / 2 for p in pos], last, width, yerr=last_err,
               capsize=2, label="last round")
        ax.set_xticks(list(pos))
        ax.set_xticklabels(names, rotation=60, ha="right")
        ax.set_ylabel("CV accuracy")
        ax.set_ylim(0, 1.05)
        ax.legend(loc="lower right")
        _save(fig, path)


def rounds_figure(rows: Sequence[ReportRow], path) -> None:
    """Accuracy against selection round, one line per site."""
    sites = _by_site(rows)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for name, entries in sites.items():
            ax.plot([r.round_index for r in entries],
                    [r.acc_mean for r in entries],
                    marker="o", markersize=3, linewidth=1, label=name)
        ax.set_xlabel("selection round (0 = all features)")
        ax.set_ylabel("CV accuracy")
        if len(sites) <= 10:
            ax.legend(fontsize=7)
        _save(fig, path)


def _annotate_corr(ax, corr: CorrelationResult | None) -> None:
    if corr is not None:
        ax.set_title(f"r = {corr.r:.3f}, p = {corr.p_value:.2e} (n = {corr.n})",
                     fontsize=9)


def size_accuracy_figure(sizes: Sequence[float], accuracies: Sequence[float],
                         corr: CorrelationResult | None, path) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 3.2))
        ax.scatter(sizes, accuracies, s=18)
        ax.set_xlabel("site data size")
        ax.set_ylabel("CV accuracy")
        _annotate_corr(ax, corr)
        _save(fig, path)


def phenotype_figure(
    panels: Mapping[str, tuple[Sequence[float], Sequence[float], CorrelationResult | None]],
    path,
) -> None:
    """2x2 pair plots: bootstrapped phenotype statistic vs accuracy."""
    names = list(panels)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(2, 2, figsize=(7, 5.6))
        for ax, name in zip(axes.ravel(), names):
            metric, acc, corr = panels[name]
            ax.scatter(metric, acc, s=8, alpha=0.6)
            ax.set_xlabel(name)
            ax.set_ylabel("accuracy")
            _annotate_corr(ax, corr)
        for ax in axes.ravel()[len(names):]:
            ax.set_visible(False)
        fig.tight_layout()
        _save(fig, path)


def embedding_figure(sites: Sequence[str], xy, accuracies: Sequence[float],
                     path) -> None:
    """Scan-condition embedding coloured by each site's accuracy."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.6, 3.8))
        sc = ax.scatter(xy[:, 0], xy[:, 1], c=accuracies, cmap="viridis", s=36)
        for name, (x, y) in zip(sites, xy):
            ax.annotate(name, (x, y), fontsize=6,
                        xytext=(2, 2), textcoords="offset points")
        fig.colorbar(sc, ax=ax, label="accuracy")
        ax.set_xlabel("t-SNE 1")
        ax.set_ylabel("t-SNE 2")
        _save(fig, path)
