"""Report emission: per-section CSVs, an aligned summary table, and
optional rendered figures.

CSV floats are written with repr so they round-trip exactly; the summary
table rounds to six decimals for reading. Figure rendering imports
matplotlib lazily and uses the Agg backend so report generation works
headless.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .metrics import (
    CORRELATION_METRICS,
    DISTANCE_METRICS,
    OVERLAP_METRICS,
    MetricReport,
)

GROUPS = (
    ("correlation (higher is better)", CORRELATION_METRICS),
    ("overlap (higher is better)", OVERLAP_METRICS),
    ("distance (lower is better)", DISTANCE_METRICS),
)

# forward-pass cost of each method; ensemble/dropout/switches scale with
# the stack depth found in the dataset
STATIC_FORWARD_PASSES = {"radmi": 1, "entropy": 1, "msp": 1}


def forward_pass_counts(section) -> dict:
    """Forward-pass-equivalent cost per method, from one section's dumps."""
    counts = dict(STATIC_FORWARD_PASSES)
    if section.ensemble_probs is not None:
        counts["ensemble"] = int(section.ensemble_probs.shape[0])
    if section.dropout_probs is not None:
        counts["mcdropout"] = int(section.dropout_probs.shape[0])
    if section.epoch_preds is not None:
        counts["switches"] = int(section.epoch_preds.shape[0])
    return counts


def write_per_section_csv(report: MetricReport, path) -> None:
    """Rows (section_id, metric, value) in sorted-section, canonical-metric
    order; values repr-formatted for exact round-trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["section_id", "metric", "value"])
        for sid in sorted(report.per_section):
            for metric, value in report.per_section[sid].items():
                writer.writerow([sid, metric, repr(float(value))])


def format_summary(method_reports: dict, reference: str,
                   forward_passes: dict) -> str:
    """Aligned text table: one block per method, metrics grouped by
    family, mean +- sample std cells, forward-pass footer."""
    lines = []
    lines.append("agreement summary")
    lines.append(f"reference: {reference}")
    any_report = next(iter(method_reports.values()))
    lines.append(f"sections: {any_report.section_count}")
    if any_report.section_count == 1:
        lines.append("note: single section; std is 0 by convention")
    for method in method_reports:
        report = method_reports[method]
        lines.append("")
        lines.append(f"method: {method}")
        for group_title, names in GROUPS:
            present = [n for n in names if n in report.aggregates]
            if not present:
                continue
            lines.append(f"  {group_title}")
            for name in present:
                mean, std = report.aggregates[name]
                lines.append(f"    {name:<20} {mean:>10.6f} ± {std:.6f}")
    lines.append("")
    footer = ", ".join(f"{m}={c}" for m, c in forward_passes.items())
    lines.append(f"forward passes: {footer}")
    lines.append("")
    return "\n".join(lines)


def write_summary(method_reports: dict, reference: str, forward_passes: dict,
                  path) -> str:
    text = format_summary(method_reports, reference, forward_passes)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return text


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_map_grid(named_maps, path, suptitle: str | None = None) -> None:
    """One heatmap panel per (title, H x W array) entry."""
    plt = _pyplot()
    n = len(named_maps)
    cols = min(3, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 3.6 * rows),
                             squeeze=False)
    for ax, (title, arr) in zip(axes.flat, named_maps):
        im = ax.imshow(np.asarray(arr), cmap="viridis")
        ax.set_title(title, fontsize=10)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    for ax in list(axes.flat)[n:]:
        ax.set_visible(False)
    if suptitle:
        fig.suptitle(suptitle)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_metric_bars(report: MetricReport, path, title: str) -> None:
    """Bar chart of aggregate means with sample-std error bars."""
    plt = _pyplot()
    names = list(report.aggregates)
    means = [report.aggregates[n][0] for n in names]
    stds = [report.aggregates[n][1] for n in names]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.8 * len(names)), 4.2))
    ax.bar(range(len(names)), means, yerr=stds, capsize=3, color="#4477aa")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel("mean ± std across sections")
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)
