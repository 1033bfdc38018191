"""Delimited and figure output for reports and studies.

All figures are rendered headlessly to PNG files next to the CSV output; the
metric computations never depend on this module.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .dataset import Dataset
from .evaluation import EvaluationReport, RunResult, StratumMetrics

logger = logging.getLogger(__name__)

STRATUM_ORDER = ("low", "high", "unanimous", "all")
SWEEP_AXES = ("temperature", "examples_per_label", "samples_per_query")


def write_csv(path: str | Path, rows: Sequence[dict], fieldnames: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row.get(k)) for k in fieldnames})


def _csv_value(value) -> object:
    return "" if value is None else value


def write_report_csv(path: str | Path, report: EvaluationReport) -> None:
    write_csv(
        path,
        [
            {
                "n": report.n,
                "accuracy": report.accuracy,
                "spearman_rho": report.spearman_rho,
                "fleiss_kappa_humans": report.fleiss_kappa_humans,
                "fleiss_kappa_with_system": report.fleiss_kappa_with_system,
                "config_hash": report.config_hash,
            }
        ],
        [
            "n",
            "accuracy",
            "spearman_rho",
            "fleiss_kappa_humans",
            "fleiss_kappa_with_system",
            "config_hash",
        ],
    )


def write_stratified_csv(path: str | Path, stratified: dict[str, StratumMetrics]) -> None:
    rows = []
    for name in STRATUM_ORDER:
        if name not in stratified:
            continue
        m = stratified[name]
        rows.append(
            {
                "stratum": name,
                "n": m.n,
                "accuracy": m.accuracy,
                "cohen_kappa": m.cohen_kappa,
                "spearman_rho": m.spearman_rho,
            }
        )
    write_csv(path, rows, ["stratum", "n", "accuracy", "cohen_kappa", "spearman_rho"])


def render_stratified_figure(
    stratified: dict[str, StratumMetrics], out_path: str | Path
) -> Path:
    names = [n for n in STRATUM_ORDER if n in stratified]
    metrics = ("accuracy", "cohen_kappa", "spearman_rho")
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.25
    for offset, metric in enumerate(metrics):
        values = [getattr(stratified[n], metric) for n in names]
        xs = [i + (offset - 1) * width for i in range(len(names))]
        ax.bar(
            xs,
            [v if v is not None else 0.0 for v in values],
            width=width,
            label=metric.replace("_", " "),
        )
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels([f"{n}\n(n={stratified[n].n})" for n in names])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Agreement with human labels by consensus stratum")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def render_probability_scatter(
    run: RunResult, ds: Dataset, out_path: str | Path
) -> Path | None:
    pairs = [
        (run.per_point[p.point.id].probability, p.human_probability)
        for p in ds.labeled_points()
        if p.point.id in run.per_point
    ]
    if not pairs:
        return None
    xs = [a for a, _ in pairs]
    ys = [b for _, b in pairs]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=1)
    ax.scatter(ys, xs, s=12, alpha=0.5)
    ax.set_xlabel("human probability")
    ax.set_ylabel("system probability")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("System vs human hallucination probability")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def render_evaluation_figures(
    run_dir: str | Path, report: EvaluationReport, run: RunResult, ds: Dataset
) -> list[Path]:
    run_dir = Path(run_dir)
    written: list[Path] = []
    if report.stratified is not None:
        written.append(
            render_stratified_figure(report.stratified, run_dir / "stratified.png")
        )
    scatter = render_probability_scatter(run, ds, run_dir / "probability_scatter.png")
    if scatter is not None:
        written.append(scatter)
    return written


def _band(rows: list[dict], metric: str) -> tuple[float | None, float | None, float | None]:
    values = [r[metric] for r in rows if r.get(metric) is not None]
    if not values:
        return None, None, None
    return sum(values) / len(values), min(values), max(values)


def render_sweep_figures(rows: Sequence[dict], out_dir: str | Path) -> list[Path]:
    """One figure per swept axis: mean accuracy and rank correlation with a
    min/max band over passes (and over the other axes when they also vary)."""
    out_dir = Path(out_dir)
    per_pass = [r for r in rows if r.get("pass") != "mean"]
    written: list[Path] = []
    for axis in SWEEP_AXES:
        values = sorted({r[axis] for r in per_pass})
        if len(values) < 2:
            continue
        means_acc, lo_acc, hi_acc = [], [], []
        means_rho, lo_rho, hi_rho = [], [], []
        for value in values:
            bucket = [r for r in per_pass if r[axis] == value]
            m, lo, hi = _band(bucket, "accuracy")
            means_acc.append(m)
            lo_acc.append(lo)
            hi_acc.append(hi)
            m, lo, hi = _band(bucket, "spearman_rho")
            means_rho.append(m)
            lo_rho.append(lo)
            hi_rho.append(hi)

        fig, ax = plt.subplots(figsize=(6, 4))
        for label, means, lo, hi, color in (
            ("accuracy", means_acc, lo_acc, hi_acc, "tab:blue"),
            ("spearman rho", means_rho, lo_rho, hi_rho, "tab:orange"),
        ):
            xs = [v for v, m in zip(values, means) if m is not None]
            ys = [m for m in means if m is not None]
            if not xs:
                continue
            ax.plot(xs, ys, marker="o", label=label, color=color)
            band_lo = [l for l, m in zip(lo, means) if m is not None]
            band_hi = [h for h, m in zip(hi, means) if m is not None]
            ax.fill_between(xs, band_lo, band_hi, alpha=0.15, color=color)
        ax.set_xlabel(axis.replace("_", " "))
        ax.set_ylabel("score")
        ax.set_title(f"Classifier performance by {axis.replace('_', ' ')}")
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"sweep_{axis}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    if not written:
        logger.info("sweep grid has no axis with >1 value; no figures rendered")
    return written


def render_ablation_figure(rows: Sequence[dict], out_path: str | Path) -> Path:
    means = [r for r in rows if r.get("pass") == "mean"]
    variants = [r["variant"] for r in means]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.35
    for offset, metric in ((-0.5, "accuracy"), (0.5, "spearman_rho")):
        values = [r[metric] if r[metric] is not None else 0.0 for r in means]
        errs_lo = [
            (r[metric] - r[f"{metric}_min"]) if r[metric] is not None else 0.0
            for r in means
        ]
        errs_hi = [
            (r[f"{metric}_max"] - r[metric]) if r[metric] is not None else 0.0
            for r in means
        ]
        xs = [i + offset * width for i in range(len(means))]
        ax.bar(
            xs,
            values,
            width=width,
            yerr=[errs_lo, errs_hi],
            capsize=3,
            label=metric.replace("_", " "),
        )
    ax.set_xticks(range(len(means)))
    ax.set_xticklabels(variants, rotation=20, ha="right")
    ax.set_ylabel("score")
    ax.set_title("Prompt-component removal study (cumulative)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)
