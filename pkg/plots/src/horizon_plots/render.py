"""Deterministic rendering of the five figure kinds.

Rendering is pinned for byte-stable output: the Agg backend, fixed fonts and
DPI, a fixed SVG hash salt, and no date metadata.  Every figure embeds the
digests of its source files (and the run manifest, when present) in its
metadata, so a figure can be traced back to the exact run that produced it.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .figspec import FigureSpec, SchemaError, read_csv, read_fit_json, source_digests

RC_PARAMS = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "svg.hashsalt": "horizon-plots",
    "svg.fonttype": "none",
    "axes.grid": True,
    "grid.alpha": 0.35,
}

CONDITION_COLORS = {
    "unstructured": "#1f5fbf",
    "baseline": "#1f5fbf",
    "structured": "#e07b00",
    "landmarks": "#e07b00",
}


def render(spec: FigureSpec) -> Path:
    """Build and write the figure; returns the output path."""
    with matplotlib.rc_context(RC_PARAMS):
        fig = build_figure(spec)
        try:
            spec.output.parent.mkdir(parents=True, exist_ok=True)
            metadata = _metadata(spec)
            fig.savefig(spec.output, format=spec.format, metadata=metadata)
        finally:
            plt.close(fig)
    return spec.output


def _metadata(spec: FigureSpec) -> dict:
    sources = f"sources: {source_digests(spec)}"
    if spec.format == "svg":
        return {"Date": None, "Title": spec.style.get("title", spec.kind), "Description": sources}
    return {"Title": spec.style.get("title", spec.kind), "Description": sources, "Software": "horizon-plots"}


def build_figure(spec: FigureSpec):
    builder = _BUILDERS[spec.kind]
    fig, ax = plt.subplots(figsize=tuple(spec.style.get("figsize", (6.4, 4.2))))
    builder(ax, spec)
    style = spec.style
    if "title" in style:
        ax.set_title(style["title"])
    fig.tight_layout()
    return fig


def _condition_color(condition: str, fallback_index: int) -> str:
    palette = ("#1f5fbf", "#e07b00", "#2a9d2a", "#b02ab0")
    return CONDITION_COLORS.get(condition, palette[fallback_index % len(palette)])


def _group_by_condition(rows, key):
    grouped = defaultdict(list)
    for row in rows:
        grouped[row["condition"]].append(row)
    for name in grouped:
        grouped[name].sort(key=lambda r: float(r[key]))
    return dict(sorted(grouped.items()))


def _scaling_logy(ax, spec: FigureSpec):
    rows = read_csv(spec.inputs["curve"], "curve")
    grouped = _group_by_condition(rows, "L")
    for i, (condition, series) in enumerate(grouped.items()):
        xs = [float(r["L"]) for r in series]
        med = [float(r["median_episodes"]) for r in series]
        lo = [float(r["iqr_low"]) for r in series]
        hi = [float(r["iqr_high"]) for r in series]
        color = _condition_color(condition, i)
        ax.plot(xs, med, marker="o", color=color, label=condition)
        ax.fill_between(xs, lo, hi, color=color, alpha=0.15, linewidth=0)
    first = next(iter(grouped.values()))
    theory_x = [float(r["L"]) for r in first]
    theory_y = [float(r["theory_reference"]) for r in first]
    if any(y > 0 for y in theory_y):
        ax.plot(theory_x, theory_y, linestyle="--", color="black", label="theoretical reference")
    if spec.style.get("logy", True):
        ax.set_yscale("log")
    ax.set_xlabel(spec.style.get("xlabel", "horizon L"))
    ax.set_ylabel(spec.style.get("ylabel", "median episodes-to-success"))
    ax.legend(loc="upper left")


def _decay_with_thresholds(ax, spec: FigureSpec):
    rows = read_csv(spec.inputs["trace"], "trace")
    fit = read_fit_json(spec.inputs["fit"])
    xs = [float(r["t"]) for r in rows]
    rho = [float(r["rho"]) for r in rows]
    se = [float(r["stderr"]) for r in rows]
    ax.plot(xs, rho, color="#1f5fbf", label="advantage")
    if any(s > 0 for s in se):
        lo = [max(0.0, r - s) for r, s in zip(rho, se)]
        hi = [r + s for r, s in zip(rho, se)]
        ax.fill_between(xs, lo, hi, color="#1f5fbf", alpha=0.2, linewidth=0)
    tau = float(fit["tau"])
    l_star = float(fit["l_star"])
    ax.axhline(tau, linestyle="--", color="#b02020", label=f"threshold = {tau:g}")
    if np.isfinite(l_star) and l_star > 0:
        ax.axvline(l_star, linestyle=":", color="#404040", label=f"critical length = {l_star:.4g}")
    ax.set_xlabel(spec.style.get("xlabel", "step"))
    ax.set_ylabel(spec.style.get("ylabel", "decision advantage"))
    ax.legend(loc="upper right")


def _paired_bars(ax, spec: FigureSpec):
    rows = read_csv(spec.inputs["bars"], "bars")
    grouped = _group_by_condition(rows, "mean")
    metrics = sorted({row["metric"] for row in rows})
    conditions = list(grouped)
    width = 0.8 / max(1, len(conditions))
    positions = np.arange(len(metrics))
    for i, condition in enumerate(conditions):
        by_metric = {row["metric"]: row for row in grouped[condition]}
        missing = [m for m in metrics if m not in by_metric]
        if missing:
            raise SchemaError(
                f"{spec.inputs['bars']}: condition {condition!r} lacks metric(s) {', '.join(missing)}"
            )
        means = [float(by_metric[m]["mean"]) for m in metrics]
        stds = [float(by_metric[m]["std"]) for m in metrics]
        ax.bar(
            positions + (i - (len(conditions) - 1) / 2) * width,
            means,
            width=width,
            yerr=stds,
            capsize=4,
            color=_condition_color(condition, i),
            label=condition,
        )
    ax.set_xticks(positions)
    ax.set_xticklabels(metrics)
    ax.set_ylabel(spec.style.get("ylabel", "metric value (mean ± std)"))
    ax.legend(loc="upper left")


def _phase_diagram(ax, spec: FigureSpec):
    rows = read_csv(spec.inputs["phase"], "phase")
    xs = [float(r["b"]) for r in rows]
    ys = [float(r["l_star_b"]) for r in rows]
    order = np.argsort(xs)
    xs = list(np.asarray(xs)[order])
    ys = list(np.asarray(ys)[order])
    ax.plot(xs, ys, color="black", label="phase boundary")
    top = max(ys) * 1.25
    ax.fill_between(xs, 0, ys, color="#2a9d2a", alpha=0.15, linewidth=0)
    ax.fill_between(xs, ys, top, color="#b02020", alpha=0.12, linewidth=0)
    ax.text(0.05, 0.12, "stable", transform=ax.transAxes)
    ax.text(0.60, 0.88, "instability", transform=ax.transAxes)
    ax.set_ylim(0, top)
    ax.set_xlabel(spec.style.get("xlabel", "branching factor b"))
    ax.set_ylabel(spec.style.get("ylabel", "segment length"))
    ax.legend(loc="lower right")


def _rooms_over_time(ax, spec: FigureSpec):
    rows = read_csv(spec.inputs["visitation"], "visitation")
    grouped = _group_by_condition(rows, "step")
    markers = ("o", "s", "^", "D")
    for i, (condition, series) in enumerate(grouped.items()):
        xs = [float(r["step"]) for r in series]
        ys = [float(r["distinct_rooms"]) for r in series]
        ax.plot(xs, ys, marker=markers[i % len(markers)], markersize=4,
                color=_condition_color(condition, i), label=condition)
    ax.set_xlabel(spec.style.get("xlabel", "interaction steps"))
    ax.set_ylabel(spec.style.get("ylabel", "distinct rooms visited"))
    ax.legend(loc="upper left")


_BUILDERS = {
    "scaling_logy": _scaling_logy,
    "decay_with_thresholds": _decay_with_thresholds,
    "paired_bars": _paired_bars,
    "phase_diagram": _phase_diagram,
    "rooms_over_time": _rooms_over_time,
}
