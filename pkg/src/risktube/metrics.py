"""Evaluation metrics for predicted risk tubes.

Coverage is the fraction of ground-truth risk objects whose risky
timesteps are fully contained in the prediction. Tube Volume is the mean
number of predicted risky timesteps per predicted object. Temporal
Consistency compares switch counts, Boundary Alignment measures
exponentially weighted accuracy around the ground-truth onset and release
boundaries, and Risk-IoU combines interval IoU with the mean of TC and BA.

Ambiguous predictions count as risky throughout (conservative policy);
ground truth never contains ambiguous steps. Multi-run ground truth is
handled with union semantics: containment and IoU use the union of risky
steps, and the boundaries are the first and last risky step overall.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .tube import (
    AmbiguityPolicy,
    DecisionSeq,
    RiskCategory,
    RiskTube,
    interval_iou,
    switch_count,
)


@dataclass(frozen=True)
class BoundaryConfig:
    """Decay constant tau for the boundary weights w(t) = exp(-|t - b|/tau)."""

    tau: float = 1.0

    def __post_init__(self) -> None:
        if not (self.tau > 0) or not math.isfinite(self.tau):
            raise ValueError(f"tau must be positive and finite, got {self.tau!r}")


@dataclass(frozen=True)
class MetricStats:
    """Aggregated metric values over one group of objects."""

    coverage: float
    tube_volume: float
    tc: float
    ba: float
    risk_iou: float
    n_objects: int
    n_predicted: int

    def to_dict(self) -> dict:
        return {
            "coverage": self.coverage,
            "tube_volume": self.tube_volume,
            "tc": self.tc,
            "ba": self.ba,
            "risk_iou": self.risk_iou,
            "n_objects": self.n_objects,
            "n_predicted": self.n_predicted,
        }


@dataclass(frozen=True)
class MetricReport:
    """Overall metric aggregates plus the per-category breakdown."""

    overall: MetricStats
    per_category: dict[RiskCategory, MetricStats] = field(default_factory=dict)

    @property
    def coverage(self) -> float:
        return self.overall.coverage

    @property
    def tube_volume(self) -> float:
        return self.overall.tube_volume

    @property
    def tc(self) -> float:
        return self.overall.tc

    @property
    def ba(self) -> float:
        return self.overall.ba

    @property
    def risk_iou(self) -> float:
        return self.overall.risk_iou

    @property
    def n_objects(self) -> int:
        return self.overall.n_objects

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "per_category": {
                cat.value: stats.to_dict() for cat, stats in self.per_category.items()
            },
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @staticmethod
    def csv_fieldnames() -> list[str]:
        fields = ["label"] + [
            f"{k}" for k in ("coverage", "tube_volume", "tc", "ba", "risk_iou",
                             "n_objects", "n_predicted")
        ]
        for cat in RiskCategory:
            fields += [
                f"{cat.value}_{k}"
                for k in ("coverage", "tube_volume", "tc", "ba", "risk_iou",
                          "n_objects", "n_predicted")
            ]
        return fields

    def to_csv_row(self, label: str) -> dict:
        """One flat CSV row (plot-tooling format) for this report."""
        row: dict = {"label": label}
        row.update(self.overall.to_dict())
        for cat in RiskCategory:
            stats = self.per_category.get(cat)
            for k in ("coverage", "tube_volume", "tc", "ba", "risk_iou",
                      "n_objects", "n_predicted"):
                row[f"{cat.value}_{k}"] = "" if stats is None else stats.to_dict()[k]
        return row


def reports_to_csv(rows: list[tuple[str, "MetricReport"]]) -> str:
    """Render labeled reports as CSV text, one row per report."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=MetricReport.csv_fieldnames())
    writer.writeheader()
    for label, report in rows:
        writer.writerow(report.to_csv_row(label))
    return buf.getvalue()


def _gt_steps(seq: DecisionSeq) -> frozenset[int]:
    steps = seq.risky_steps(AmbiguityPolicy.EXCLUDE)
    if not steps:
        raise ValueError("ground truth has no risky timestep; boundaries undefined")
    return steps


def coverage(pred_tube: RiskTube, gt_tube: RiskTube) -> float:
    """Fraction of ground-truth risk objects fully covered by the prediction.

    An object is covered when its ground-truth risky timesteps are a subset
    of the object's predicted risky timesteps (ambiguous counts as risky).
    Objects missing from the prediction count as uncovered. Raises
    ValueError when the ground-truth tube is empty.
    """
    if not gt_tube.entries:
        raise ValueError("coverage is undefined for an empty ground-truth tube")
    covered = 0
    for obj, entry in gt_tube.entries.items():
        gt_steps = _gt_steps(entry.seq)
        if obj not in pred_tube.entries:
            continue
        pred_steps = pred_tube.entries[obj].seq.risky_steps(AmbiguityPolicy.INCLUDE)
        if gt_steps <= pred_steps:
            covered += 1
    return covered / len(gt_tube.entries)


def tube_volume(pred_tube: RiskTube) -> float:
    """Mean count of predicted risky timesteps per predicted object."""
    if not pred_tube.entries:
        raise ValueError("tube volume is undefined for an empty tube")
    sizes = [
        len(entry.seq.risky_steps(AmbiguityPolicy.INCLUDE))
        for entry in pred_tube.entries.values()
    ]
    return float(np.mean(sizes))


def temporal_consistency(pred: DecisionSeq, gt: DecisionSeq) -> float:
    """TC = 1 - |switches(pred) - switches(gt)| / (H - 1)."""
    if len(pred) != len(gt):
        raise ValueError("prediction and ground truth must share a horizon")
    h = len(pred)
    t_pred = switch_count(pred.binarized(AmbiguityPolicy.INCLUDE))
    t_gt = switch_count(gt.binarized(AmbiguityPolicy.INCLUDE))
    return 1.0 - abs(t_pred - t_gt) / (h - 1)


def boundary_alignment(
    pred: DecisionSeq, gt: DecisionSeq, cfg: BoundaryConfig = BoundaryConfig()
) -> float:
    """Mean of the locally weighted accuracies around the ground-truth
    onset (first risky step) and release (last risky step) boundaries.

    Around a boundary b, steps are weighted w(t) = exp(-|t - b|/tau) and
    the score is 1 - sum(w * mismatch) / sum(w). Requires at least one
    risky ground-truth step.
    """
    if len(pred) != len(gt):
        raise ValueError("prediction and ground truth must share a horizon")
    gt_steps = _gt_steps(gt)
    t_start, t_end = min(gt_steps), max(gt_steps)
    match = pred.binarized(AmbiguityPolicy.INCLUDE) == gt.binarized(
        AmbiguityPolicy.INCLUDE
    )
    ts = np.arange(len(pred))
    scores = []
    for boundary in (t_start, t_end):
        w = np.exp(-np.abs(ts - boundary) / cfg.tau)
        scores.append(1.0 - float(np.sum(w * (~match)) / np.sum(w)))
    return float(np.mean(scores))


def risk_iou(
    pred: DecisionSeq, gt: DecisionSeq, cfg: BoundaryConfig = BoundaryConfig()
) -> float:
    """Interval IoU of risky steps times the mean of TC and BA."""
    iou = interval_iou(
        pred.risky_steps(AmbiguityPolicy.INCLUDE),
        gt.risky_steps(AmbiguityPolicy.EXCLUDE),
    )
    tc = temporal_consistency(pred, gt)
    ba = boundary_alignment(pred, gt, cfg)
    return iou * (tc + ba) / 2.0


def _aggregate(per_object: list[dict], tv_entries: list[int]) -> MetricStats:
    n = len(per_object)
    return MetricStats(
        coverage=float(np.mean([o["covered"] for o in per_object])) if n else float("nan"),
        tube_volume=float(np.mean(tv_entries)) if tv_entries else float("nan"),
        tc=float(np.mean([o["tc"] for o in per_object])) if n else float("nan"),
        ba=float(np.mean([o["ba"] for o in per_object])) if n else float("nan"),
        risk_iou=float(np.mean([o["risk_iou"] for o in per_object])) if n else float("nan"),
        n_objects=n,
        n_predicted=len(tv_entries),
    )


def evaluate(
    pred_tubes: list[RiskTube],
    gt_tubes: list[RiskTube],
    cfg: BoundaryConfig = BoundaryConfig(),
) -> MetricReport:
    """Aggregate all metrics over aligned (prediction, ground truth) tube
    pairs, overall and per risk category.

    Coverage, TC, BA, and Risk-IoU average over ground-truth risk objects
    (missing predictions count as uncovered and score zero); Tube Volume
    averages over predicted objects, which may include objects that are
    not ground-truth risks. Per-category Tube Volume buckets predicted
    objects by their ground-truth category when they have one.
    """
    if len(pred_tubes) != len(gt_tubes):
        raise ValueError("prediction and ground-truth tube lists must align")
    per_object: list[dict] = []
    tv_all: list[int] = []
    tv_by_cat: dict[RiskCategory, list[int]] = {c: [] for c in RiskCategory}
    by_cat: dict[RiskCategory, list[dict]] = {c: [] for c in RiskCategory}
    for pred_tube, gt_tube in zip(pred_tubes, gt_tubes):
        gt_cats = {
            obj: entry.category for obj, entry in gt_tube.entries.items()
        }
        for obj, entry in pred_tube.entries.items():
            size = len(entry.seq.risky_steps(AmbiguityPolicy.INCLUDE))
            tv_all.append(size)
            cat = entry.category or gt_cats.get(obj)
            if cat is not None:
                tv_by_cat[cat].append(size)
        for obj, gt_entry in gt_tube.entries.items():
            gt_steps = _gt_steps(gt_entry.seq)
            if obj in pred_tube.entries:
                pred_seq = pred_tube.entries[obj].seq
                pred_steps = pred_seq.risky_steps(AmbiguityPolicy.INCLUDE)
                rec = {
                    "covered": 1.0 if gt_steps <= pred_steps else 0.0,
                    "tc": temporal_consistency(pred_seq, gt_entry.seq),
                    "ba": boundary_alignment(pred_seq, gt_entry.seq, cfg),
                    "risk_iou": risk_iou(pred_seq, gt_entry.seq, cfg),
                }
            else:
                rec = {"covered": 0.0, "tc": 0.0, "ba": 0.0, "risk_iou": 0.0}
            per_object.append(rec)
            if gt_entry.category is not None:
                by_cat[gt_entry.category].append(rec)
    if not per_object:
        raise ValueError("no ground-truth risk objects to evaluate")
    report = MetricReport(
        overall=_aggregate(per_object, tv_all),
        per_category={
            cat: _aggregate(objs, tv_by_cat[cat])
            for cat, objs in by_cat.items()
            if objs or tv_by_cat[cat]
        },
    )
    return report
