"""Figures written next to the tab-delimited reports."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .mining import FrequentItemsetTable  # noqa: E402

PHASE_COLORS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _label(items) -> str:
    return "{" + ",".join(map(str, items)) + "}"


def plot_support(table: FrequentItemsetTable, threshold: int, path: str | os.PathLike) -> None:
    """Support count of every frequent itemset, grouped by level."""
    sets = [(s, c) for k in sorted(table.levels) for s, c in table.levels[k]]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(sets) + 1.5), 3.2))
    if sets:
        xs = range(len(sets))
        colors = [PHASE_COLORS[(len(s) - 1) % len(PHASE_COLORS)] for s, _ in sets]
        ax.bar(xs, [c for _, c in sets], color=colors)
        ax.set_xticks(list(xs))
        ax.set_xticklabels([_label(s) for s, _ in sets], rotation=60, ha="right", fontsize=7)
        ax.axhline(threshold, color="k", lw=0.8, ls="--", label=f"threshold {threshold}")
        ax.legend(frameon=False, fontsize=7)
    else:
        ax.text(0.5, 0.5, "no frequent itemsets", ha="center", va="center", transform=ax.transAxes)
    ax.set_ylabel("support count")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_dispatch(result, path: str | os.PathLike) -> None:
    """Per-request hook invocations, colored by phase, with checkpoint markers."""
    recs = result.records
    fig, ax = plt.subplots(figsize=(max(4.0, 0.3 * len(recs) + 1.5), 3.0))
    if recs:
        ax.bar(
            [r.index for r in recs],
            [r.sub_dispatch_count for r in recs],
            color=[PHASE_COLORS[(r.phase - 1) % len(PHASE_COLORS)] for r in recs],
        )
        for cp in result.checkpoints:
            ax.axvline(cp + 0.5, color="k", lw=0.8, ls=":")
        ax.set_xlim(0.4, len(recs) + 0.6)
    ax.set_xlabel("request")
    ax.set_ylabel("sub-dispatches")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
