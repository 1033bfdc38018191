"""Scoring a classification run against human-labeled data.

Produces accuracy, rank correlation between system and human hallucination
probabilities, multi-rater agreement with and without the system added as an
extra rater, and the same metrics stratified by human consensus level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifier import Classification
from .dataset import (
    STRATA,
    Dataset,
    Label,
    LabeledDataPoint,
    fixed_rater_points,
    stratify_by_consensus,
)
from .errors import DegenerateInput, MissingPrediction
from .metrics import cohen_kappa, fleiss_kappa, spearman_rho

logger = logging.getLogger(__name__)

RHO_SOURCES = ("file", "votes")


@dataclass
class RunResult:
    """Per-point classifications for one run configuration."""

    config_hash: str
    dataset_sha256: str | None
    per_point: dict[str, Classification]

    def classification_for(self, point_id: str) -> Classification:
        try:
            return self.per_point[point_id]
        except KeyError:
            raise MissingPrediction(f"run has no prediction for point {point_id!r}")


@dataclass
class StratumMetrics:
    n: int
    accuracy: float | None
    cohen_kappa: float | None
    spearman_rho: float | None
    degenerate: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "cohen_kappa": self.cohen_kappa,
            "spearman_rho": self.spearman_rho,
            "degenerate": dict(self.degenerate),
        }

    @staticmethod
    def from_dict(raw: dict) -> "StratumMetrics":
        return StratumMetrics(
            n=raw["n"],
            accuracy=raw.get("accuracy"),
            cohen_kappa=raw.get("cohen_kappa"),
            spearman_rho=raw.get("spearman_rho"),
            degenerate=dict(raw.get("degenerate", {})),
        )


@dataclass
class EvaluationReport:
    accuracy: float | None
    spearman_rho: float | None
    n: int
    stratified: dict[str, StratumMetrics] | None = None
    fleiss_kappa_humans: float | None = None
    fleiss_kappa_with_system: float | None = None
    degenerate: dict[str, str] = field(default_factory=dict)
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "spearman_rho": self.spearman_rho,
            "n": self.n,
            "stratified": None
            if self.stratified is None
            else {name: m.to_dict() for name, m in self.stratified.items()},
            "fleiss_kappa_humans": self.fleiss_kappa_humans,
            "fleiss_kappa_with_system": self.fleiss_kappa_with_system,
            "degenerate": dict(self.degenerate),
            "config_hash": self.config_hash,
        }

    @staticmethod
    def from_dict(raw: dict) -> "EvaluationReport":
        stratified = raw.get("stratified")
        return EvaluationReport(
            accuracy=raw.get("accuracy"),
            spearman_rho=raw.get("spearman_rho"),
            n=raw["n"],
            stratified=None
            if stratified is None
            else {name: StratumMetrics.from_dict(m) for name, m in stratified.items()},
            fleiss_kappa_humans=raw.get("fleiss_kappa_humans"),
            fleiss_kappa_with_system=raw.get("fleiss_kappa_with_system"),
            degenerate=dict(raw.get("degenerate", {})),
            config_hash=raw.get("config_hash", ""),
        )


def _evaluable(points: Sequence[LabeledDataPoint]) -> list[LabeledDataPoint]:
    return [p for p in points if p.gold_label is not None]


def accuracy(run: RunResult, ds: Dataset) -> float:
    """Fraction of gold-labeled points where the run's label matches gold."""
    points = _evaluable(ds.labeled_points())
    if not points:
        raise ValueError("dataset has no gold-labeled points")
    hits = sum(
        1
        for p in points
        if run.classification_for(p.point.id).label is p.gold_label
    )
    return hits / len(points)


def _human_probability(p: LabeledDataPoint, source: str) -> float | None:
    if source == "file":
        return p.human_probability
    if source == "votes":
        return p.vote_fraction
    raise ValueError(f"unknown rho source {source!r}; expected one of {RHO_SOURCES}")


def system_human_rho(
    run: RunResult, points: Sequence[LabeledDataPoint], *, source: str = "file"
) -> float:
    """Rank correlation between system and human hallucination probabilities.

    ``source`` picks the human side: the file's probability field (default)
    or the rater vote fraction; points lacking the chosen field are skipped.
    """
    xs, ys = [], []
    for p in points:
        human = _human_probability(p, source)
        if human is None:
            continue
        xs.append(run.classification_for(p.point.id).probability)
        ys.append(human)
    if len(xs) < 2:
        raise DegenerateInput(
            f"fewer than 2 points carry a human probability from {source!r}",
            kind="too-few-points",
        )
    return spearman_rho(xs, ys)


def rating_table(
    points: Sequence[LabeledDataPoint],
) -> tuple[list[str], np.ndarray, int]:
    """(ids, per-item [positive, negative] counts, panel size) for rated points.

    Items whose rater count differs from the modal panel size are excluded
    with a warning, matching the consensus stratification.
    """
    kept, excluded, n_raters = fixed_rater_points(list(points))
    if excluded:
        logger.warning(
            "rating table excludes %d item(s) without the modal %d raters",
            len(excluded),
            n_raters,
        )
    ids = [p.point.id for p in kept]
    counts = np.zeros((len(kept), 2), dtype=np.int64)
    for i, p in enumerate(kept):
        positives = sum(1 for lab in p.rater_labels if lab is Label.HALLUCINATION)
        counts[i, 0] = positives
        counts[i, 1] = n_raters - positives
    return ids, counts, n_raters


def add_system_as_rater(
    ids: Sequence[str], counts: np.ndarray, run: RunResult
) -> np.ndarray:
    """Append the system's label as one extra rating per item."""
    augmented = np.array(counts, dtype=np.int64, copy=True)
    for i, point_id in enumerate(ids):
        label = run.classification_for(point_id).label
        augmented[i, 0 if label is Label.HALLUCINATION else 1] += 1
    return augmented


def _stratum_metrics(
    run: RunResult, points: Sequence[LabeledDataPoint], *, rho_source: str
) -> StratumMetrics:
    evaluable = _evaluable(points)
    degenerate: dict[str, str] = {}
    acc = None
    kappa = None
    rho = None
    if evaluable:
        system = [run.classification_for(p.point.id).label for p in evaluable]
        gold = [p.gold_label for p in evaluable]
        acc = sum(1 for s, g in zip(system, gold) if s is g) / len(evaluable)
        try:
            kappa = cohen_kappa(system, gold)
        except DegenerateInput as exc:
            degenerate["cohen_kappa"] = exc.kind
    if len(points) >= 2:
        try:
            rho = system_human_rho(run, points, source=rho_source)
        except DegenerateInput as exc:
            degenerate["spearman_rho"] = exc.kind
    return StratumMetrics(
        n=len(points),
        accuracy=acc,
        cohen_kappa=kappa,
        spearman_rho=rho,
        degenerate=degenerate,
    )


def stratified_agreement(
    run: RunResult, ds: Dataset, *, rho_source: str = "file"
) -> dict[str, StratumMetrics]:
    """Per-consensus-stratum metrics plus an "all" row over every rated point."""
    strata = stratify_by_consensus(ds)
    rows: dict[str, StratumMetrics] = {}
    for name in STRATA:
        rows[name] = _stratum_metrics(run, strata.strata[name], rho_source=rho_source)
    all_points = [p for bucket in strata.strata.values() for p in bucket]
    all_points += strata.excluded
    rows["all"] = _stratum_metrics(run, all_points, rho_source=rho_source)
    return rows


def evaluate_run(
    run: RunResult, ds: Dataset, *, rho_source: str = "file"
) -> EvaluationReport:
    """Assemble the full report for one run over one labeled dataset."""
    labeled = ds.labeled_points()
    if not labeled:
        raise ValueError(f"dataset {ds.split}/{ds.track} carries no labels")

    degenerate: dict[str, str] = {}
    evaluable = _evaluable(labeled)
    acc = accuracy(run, ds) if evaluable else None
    if not evaluable:
        degenerate["accuracy"] = "no-gold-labels"

    rho = None
    try:
        rho = system_human_rho(run, labeled, source=rho_source)
    except DegenerateInput as exc:
        degenerate["spearman_rho"] = exc.kind

    stratified = None
    fleiss_humans = None
    fleiss_with_system = None
    rated = [p for p in labeled if p.rater_labels]
    if rated:
        stratified = stratified_agreement(run, ds, rho_source=rho_source)
        ids, counts, n_raters = rating_table(labeled)
        if len(ids) >= 1 and n_raters >= 2:
            try:
                fleiss_humans = fleiss_kappa(counts, n_raters)
            except DegenerateInput as exc:
                degenerate["fleiss_kappa_humans"] = exc.kind
            try:
                fleiss_with_system = fleiss_kappa(
                    add_system_as_rater(ids, counts, run), n_raters + 1
                )
            except DegenerateInput as exc:
                degenerate["fleiss_kappa_with_system"] = exc.kind

    return EvaluationReport(
        accuracy=acc,
        spearman_rho=rho,
        n=len(evaluable),
        stratified=stratified,
        fleiss_kappa_humans=fleiss_humans,
        fleiss_kappa_with_system=fleiss_with_system,
        degenerate=degenerate,
        config_hash=run.config_hash,
    )
