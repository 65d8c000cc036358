"""SVG figures rendered from a metrics.csv file (no statistics computed here)."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

MARKERS = {"i": "o", "ii": "s", "iii": "^", "iv": "D", "v": "v", "-": "x"}
OUTCOMES = ("I", "II", "III", "IV", "V", "VI")


def _num(s):
    return float("nan") if s in ("NA", "") else float(s)


def _panel_grid(rows, metric, method):
    """One panel per (prevalence, letter); x = outcome scenario, one marker
    series per missingness scenario."""
    mine = [r for r in rows if r["method"] == method]
    prevs = sorted({r["prevalence"] for r in mine}, key=float)
    letters = sorted({r["letter"] for r in mine})
    fig, axes = plt.subplots(len(prevs), len(letters), squeeze=False, sharey=True,
                             figsize=(1.9 * len(letters) + 1, 2.2 * len(prevs) + 0.6))
    for i, p in enumerate(prevs):
        for j, letter in enumerate(letters):
            ax = axes[i][j]
            series = defaultdict(list)
            for r in mine:
                if r["prevalence"] == p and r["letter"] == letter:
                    series[r["miss"]].append((OUTCOMES.index(r["outcome"]), _num(r[metric])))
            for miss, pts in sorted(series.items()):
                pts.sort()
                ax.plot([x for x, _ in pts], [y for _, y in pts], linestyle="none",
                        marker=MARKERS.get(miss, "o"), markersize=4, label=f"({miss})")
            if metric == "coverage":
                ax.axhline(95, color="grey", linewidth=0.8)
            else:
                ax.axhline(0, color="grey", linewidth=0.8)
                for lim in (-10, 10):
                    ax.axhline(lim, color="grey", linewidth=0.5, linestyle=":")
            ax.set_xticks(range(len(OUTCOMES)))
            ax.set_xticklabels(OUTCOMES, fontsize=7)
            ax.tick_params(axis="y", labelsize=7)
            if i == 0:
                ax.set_title(f"m-DAG {letter}", fontsize=9)
            if j == 0:
                ax.set_ylabel(f"{float(p):.0%} prev.\n" + ("coverage (%)" if metric == "coverage"
                                                          else "relative bias (%)"), fontsize=8)
    handles, labels = axes[0][0].get_legend_handles_labels()
    if handles:
        fig.legend(handles, labels, loc="lower center", ncol=len(labels), fontsize=7,
                   title="missingness scenario", title_fontsize=7)
    fig.suptitle(method, fontsize=10)
    fig.tight_layout(rect=(0, 0.08, 1, 0.95))
    return fig


def write_figures(metrics_csv, out_dir) -> list:
    with open(metrics_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows = [r for r in rows if r["letter"] != "-"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    plt.rcParams["svg.hashsalt"] = "mdagace"
    for method in sorted({r["method"] for r in rows}):
        for metric, tag in (("rel_bias", "relbias"), ("coverage", "coverage")):
            fig = _panel_grid(rows, metric, method)
            path = out / f"{method}_{tag}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
