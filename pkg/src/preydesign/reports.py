"""Figure rendering for session traces and study results.

Everything draws through the Agg backend straight to files, next to the
CSV exports, so reports work on headless boxes.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.dpi"] = 110
plt.rcParams["savefig.bbox"] = "tight"
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3

_STRATEGY_ORDER = ("RG", "PE", "MD", "TE", "STATIC-PE", "STATIC-MD", "STATIC-TE")


def plot_utility_surface(surface, path, iteration=None) -> Path:
    """One utility curve with its optimum marked."""
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.plot(surface.designs, surface.values, lw=1.2)
    best = surface.values[np.where(surface.designs == surface.d_star)[0][0]]
    ax.annotate(
        f"d* = {surface.d_star}",
        xy=(surface.d_star, best),
        xytext=(surface.d_star, best + 0.06 * (np.ptp(surface.values) or 1.0)),
        ha="center",
        arrowprops=dict(arrowstyle="->", color="crimson"),
        color="crimson",
    )
    title = f"expected utility ({surface.kind.value})"
    if iteration is not None:
        title += f", iteration {iteration}"
    ax.set_title(title)
    ax.set_xlabel("initial prey density")
    ax.set_ylabel("expected utility")
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_model_probabilities(records, path, model_ids=None) -> Path:
    """Model probabilities across session iterations."""
    fig, ax = plt.subplots(figsize=(6, 3.4))
    if records:
        n_models = len(records[0].model_probs)
        iters = [r.index + 1 for r in records]
        for k in range(n_models):
            label = f"model {model_ids[k] if model_ids else k + 1}"
            ax.plot(iters, [r.model_probs[k] for r in records], marker="o",
                    ms=3, label=label)
    ax.set_ylim(0, 1)
    ax.set_xlabel("experiment")
    ax.set_ylabel("posterior model probability")
    ax.legend(fontsize=8)
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_precision_trace(records, path, model_ids=None) -> Path:
    """Log precision of each model's posterior across iterations."""
    fig, ax = plt.subplots(figsize=(6, 3.4))
    if records:
        n_models = len(records[0].log_precisions)
        iters = [r.index + 1 for r in records]
        for k in range(n_models):
            series = [r.log_precisions[k] for r in records]
            series = [v if math.isfinite(v) else math.nan for v in series]
            label = f"model {model_ids[k] if model_ids else k + 1}"
            ax.plot(iters, series, marker="o", ms=3, label=label)
    ax.set_xlabel("experiment")
    ax.set_ylabel("log D-posterior precision")
    ax.legend(fontsize=8)
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_posterior_marginals(summaries, path) -> Path:
    """Weighted-histogram marginals for every model and coordinate.

    ``summaries`` is a list of per-model dicts carrying ``histograms``:
    {coordinate: {"edges": [...], "density": [...]}} plus a ``prior``
    overlay entry with the same binning.
    """
    n_models = len(summaries)
    n_cols = max(len(s["histograms"]) for s in summaries) if n_models else 1
    fig, axes = plt.subplots(n_models, n_cols,
                             figsize=(3.2 * n_cols, 2.3 * n_models),
                             squeeze=False)
    for row, summary in enumerate(summaries):
        for col, (coord, hist) in enumerate(summary["histograms"].items()):
            ax = axes[row][col]
            edges = np.asarray(hist["edges"])
            centers = 0.5 * (edges[:-1] + edges[1:])
            ax.fill_between(centers, hist["density"], step="mid", alpha=0.55,
                            label="posterior")
            if "prior_density" in hist:
                ax.plot(centers, hist["prior_density"], "k--", lw=1.0,
                        label="prior")
            ax.set_title(f"model {summary['model']}: {coord}", fontsize=9)
            ax.tick_params(labelsize=7)
        for col in range(len(summary["histograms"]), n_cols):
            axes[row][col].axis("off")
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def _grouped_box(ax, rows, value_key, strategies):
    data, labels = [], []
    for strategy in strategies:
        vals = [r[value_key] for r in rows if r["strategy"] == strategy
                and math.isfinite(r[value_key])]
        if vals:
            data.append(vals)
            labels.append(strategy)
    if data:
        ax.boxplot(data, tick_labels=labels)


def plot_final_precision_boxes(final_rows, path) -> Path:
    """Per-truth box plots of the final log precision by strategy."""
    truths = sorted({r["truth"] for r in final_rows})
    strategies = [s for s in _STRATEGY_ORDER
                  if any(r["strategy"] == s for r in final_rows)]
    fig, axes = plt.subplots(1, max(len(truths), 1),
                             figsize=(3.0 * max(len(truths), 1), 3.2),
                             squeeze=False)
    for ax, truth in zip(axes[0], truths):
        rows = [r for r in final_rows if r["truth"] == truth]
        _grouped_box(ax, rows, "final_log_precision", strategies)
        ax.set_title(truth, fontsize=9)
        ax.tick_params(labelsize=7)
    axes[0][0].set_ylabel("final log D-posterior precision")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_final_model_prob_boxes(prob_rows, path, true_model_by_truth=None) -> Path:
    """Per-truth box plots of the final true-model probability by strategy."""
    truths = sorted({r["truth"] for r in prob_rows})
    strategies = [s for s in _STRATEGY_ORDER
                  if any(r["strategy"] == s for r in prob_rows)]
    fig, axes = plt.subplots(1, max(len(truths), 1),
                             figsize=(3.0 * max(len(truths), 1), 3.2),
                             squeeze=False)
    for ax, truth in zip(axes[0], truths):
        rows = [r for r in prob_rows if r["truth"] == truth]
        if true_model_by_truth:
            rows = [r for r in rows if r["model"] == true_model_by_truth[truth]]
        _grouped_box(ax, rows, "final_model_prob", strategies)
        ax.set_ylim(0, 1)
        ax.set_title(truth, fontsize=9)
        ax.tick_params(labelsize=7)
    axes[0][0].set_ylabel("final true-model probability")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_precision_over_iterations(per_iteration_rows, path) -> Path:
    """Median precision gain per experiment, one panel per truth."""
    truths = sorted({r["truth"] for r in per_iteration_rows})
    fig, axes = plt.subplots(1, max(len(truths), 1),
                             figsize=(3.0 * max(len(truths), 1), 3.0),
                             squeeze=False)
    for ax, truth in zip(axes[0], truths):
        for strategy in _STRATEGY_ORDER:
            rows = [r for r in per_iteration_rows
                    if r["truth"] == truth and r["strategy"] == strategy]
            if rows:
                rows.sort(key=lambda r: r["iteration"])
                ax.plot([r["iteration"] for r in rows],
                        [r["median_log_precision"] for r in rows],
                        marker=".", label=strategy)
        ax.set_title(truth, fontsize=9)
        ax.set_xlabel("experiment")
        ax.tick_params(labelsize=7)
    axes[0][0].set_ylabel("median log precision")
    axes[0][-1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_design_distributions(histogram_rows, path, bin_width=10) -> Path:
    """Where each strategy placed its design points, one panel per strategy."""
    strategies = [s for s in _STRATEGY_ORDER
                  if any(r["strategy"] == s for r in histogram_rows)]
    fig, axes = plt.subplots(1, max(len(strategies), 1),
                             figsize=(3.2 * max(len(strategies), 1), 3.0),
                             squeeze=False)
    for ax, strategy in zip(axes[0], strategies):
        rows = [r for r in histogram_rows if r["strategy"] == strategy]
        if rows:
            top = max(r["design"] for r in histogram_rows)
            edges = np.arange(0, top + bin_width + 1, bin_width)
            counts = np.zeros(len(edges) - 1)
            for r in rows:
                counts[np.searchsorted(edges, r["design"], side="right") - 1] += r["count"]
            total = counts.sum() or 1.0
            ax.bar(edges[:-1], counts / total, width=bin_width, align="edge",
                   alpha=0.8)
        ax.set_title(strategy, fontsize=9)
        ax.set_xlabel("initial prey density")
        ax.tick_params(labelsize=7)
    axes[0][0].set_ylabel("relative frequency")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def render_study_report(records, out_dir) -> list[Path]:
    """All study figures, written next to the CSV exports."""
    from .study import summarize

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summarize(records)

    final_rows = []
    prob_rows = []
    true_model_by_truth = {}
    for rec in records:
        if rec.error is not None or not rec.designs:
            continue
        true_model_by_truth[rec.truth] = rec.model_id
        final_rows.append({
            "truth": rec.truth, "strategy": rec.strategy,
            "final_log_precision": rec.log_precision_true[-1],
        })
        for k, p in enumerate(rec.model_probs[-1]):
            prob_rows.append({
                "truth": rec.truth, "strategy": rec.strategy,
                "model": k + 1, "final_model_prob": p,
            })

    paths = [
        plot_final_precision_boxes(final_rows, out_dir / "fig_final_precision.png"),
        plot_final_model_prob_boxes(prob_rows, out_dir / "fig_final_model_prob.png",
                                    true_model_by_truth),
        plot_precision_over_iterations(summary.per_iteration,
                                       out_dir / "fig_precision_iterations.png"),
        plot_design_distributions(summary.design_histogram,
                                  out_dir / "fig_design_distribution.png"),
    ]
    return paths


def render_session_report(session, out_dir) -> list[Path]:
    """Trace figures for one session: probabilities, precision, surfaces."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_ids = [m.id for m in session.config.models]
    paths = [
        plot_model_probabilities(session.records,
                                 out_dir / "fig_model_probabilities.png", model_ids),
        plot_precision_trace(session.records,
                             out_dir / "fig_log_precision.png", model_ids),
    ]
    for record in session.records:
        if record.surface is not None:
            paths.append(plot_utility_surface(
                record.surface,
                out_dir / f"fig_utility_iter{record.index + 1:02d}.png",
                iteration=record.index + 1,
            ))
    return paths
