"""Figures written next to the evaluation and ablation tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_recall_curve(report, path):
    """MOTAR against recall target, one line per class."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        classes = sorted({r.cls for r in report.table})
        for c in classes:
            rows = [r for r in report.table if r.cls == c]
            amota_c = report.per_class.get(c, {}).get("amota", float("nan"))
            ax.plot([r.recall for r in rows], [r.motar for r in rows], marker=".", ms=3,
                    label=f"{c} ({100 * amota_c:.1f})")
        ax.set_xlabel("recall")
        ax.set_ylabel("MOTAR")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_title(f"AMOTA {100 * report.amota:.1f}")
        ax.legend(loc="lower left")
        return _save(fig, path)


def plot_ablation(rows, path, metric: str = "AMOTA"):
    """Horizontal bars of one metric per ablation configuration."""
    labels = [r["config"] for r in rows]
    values = [r[metric] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 0.35 * len(rows) + 1.0))
        ax.barh(range(len(rows)), values, color="0.45")
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(labels, fontsize=7)
        ax.invert_yaxis()
        ax.set_xlabel(metric)
        lo = min(values) if values else 0.0
        ax.set_xlim(max(0.0, lo - 5.0), 100.0 if metric in ("AMOTA", "MOTA") else None)
        return _save(fig, path)
