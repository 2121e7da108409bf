"""Dataset-level plumbing: nonconformity collection, method sweeps, and
brake evaluation over scenario datasets.

Methods are addressed by name: "ours" (conformal calibration), "hd"
(fixed 0.5 threshold), and "rule" (always risky; in brake gating this is
exactly the distance-only baseline).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .calibration import (
    ConformalRiskCalibrator,
    HardDecisionBaseline,
    NonconformityRecord,
    RuleBasedBaseline,
)
from .gating import (
    GateConfig,
    average_brake_count,
    brake_sequence,
    gt_brake_sequence,
    misaligned_brake_count,
)
from .metrics import BoundaryConfig, MetricReport, evaluate
from .simulate import Scenario, Window, windows
from .tube import (
    AmbiguityPolicy,
    Decision,
    DecisionOrigin,
    DecisionSeq,
    RiskTube,
    decisions_from_labels,
)

METHODS = ("ours", "hd", "rule")


def collect_records(scenarios: Iterable[Scenario]) -> list[NonconformityRecord]:
    """Nonconformity records from every categorized, non-dropped object
    window: one record per (category, step, |label - score|)."""
    records: list[NonconformityRecord] = []
    for scenario in scenarios:
        for window in windows(scenario):
            for obj in window.objects:
                if obj.category is None or obj.dropped:
                    continue
                for t in range(len(obj.scores)):
                    records.append(
                        NonconformityRecord(
                            obj.category, t, abs(float(obj.gt[t]) - float(obj.scores[t]))
                        )
                    )
    return records


def fit_calibrator(
    scenarios: Sequence[Scenario],
    alpha: float = 0.1,
    gamma: float = 0.01,
    horizon: int | None = None,
    category_aware: bool = True,
    **kwargs,
) -> ConformalRiskCalibrator:
    """Fit a calibrator from all calibration windows of the scenarios."""
    h = horizon if horizon is not None else scenarios[0].config.horizon
    cal = ConformalRiskCalibrator(
        alpha=alpha, gamma=gamma, horizon=h, category_aware=category_aware, **kwargs
    )
    return cal.fit_records(collect_records(scenarios))


def _decision_seq(row: np.ndarray, origin: DecisionOrigin) -> DecisionSeq:
    return DecisionSeq(tuple(Decision(int(v)) for v in row), origin)


def predict_window_tube(
    window: Window,
    method: str,
    calibrator: ConformalRiskCalibrator | None = None,
    policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE,
) -> RiskTube:
    """Predicted tube over the window's visible (non-dropped) objects."""
    seqs: dict[str, DecisionSeq] = {}
    cats: dict[str, object] = {}
    horizon = len(window.objects[0].scores) if window.objects else 0
    hd = HardDecisionBaseline(horizon=horizon).fit()
    rule = RuleBasedBaseline(horizon=horizon).fit()
    for obj in window.objects:
        if obj.dropped:
            continue
        if method == "ours":
            if calibrator is None:
                raise ValueError("method 'ours' requires a fitted calibrator")
            seq = calibrator.predict_seq(obj.scores, obj.category)
        elif method == "hd":
            seq = hd.predict_seq(obj.scores)
        elif method == "rule":
            seq = rule.predict_seq(obj.scores)
        else:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        seqs[obj.object_id] = seq
        cats[obj.object_id] = obj.category
    return RiskTube.from_sequences(seqs, cats, policy)


def gt_window_tube(window: Window) -> RiskTube:
    """Ground-truth tube over objects with at least one risky step in the
    window (risk objects only; perception drops do not hide ground truth)."""
    seqs = {}
    cats = {}
    for obj in window.objects:
        if obj.gt.any():
            seqs[obj.object_id] = decisions_from_labels(obj.gt)
            cats[obj.object_id] = obj.category
    return RiskTube.from_sequences(seqs, cats, AmbiguityPolicy.INCLUDE)


def evaluate_method(
    scenarios: Sequence[Scenario],
    method: str,
    calibrator: ConformalRiskCalibrator | None = None,
    boundary: BoundaryConfig = BoundaryConfig(),
    policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE,
    online: bool = False,
) -> MetricReport:
    """Run one method over every window of the scenarios and aggregate.

    With ``online=True`` (method "ours" only) the calibrator is adapted
    after each object window from the realized per-step coverage errors,
    sweeping scenarios and windows in deterministic order.
    """
    if online and method != "ours":
        raise ValueError("online adaptation only applies to method 'ours'")
    pred_tubes = []
    gt_tubes = []
    cal = calibrator
    for scenario in scenarios:
        for window in windows(scenario):
            pred_tubes.append(predict_window_tube(window, method, cal, policy))
            gt_tubes.append(gt_window_tube(window))
            if online:
                cal = _online_update_window(cal, window)
    return evaluate(pred_tubes, gt_tubes, boundary)


def _online_update_window(
    cal: ConformalRiskCalibrator, window: Window
) -> ConformalRiskCalibrator:
    for obj in window.objects:
        if obj.category is None or obj.dropped:
            continue
        qs = cal.quantiles(obj.category)
        for t in range(len(obj.scores)):
            err = int(abs(float(obj.gt[t]) - float(obj.scores[t])) > qs[t])
            cal = cal.update(obj.category, t, err)
    return cal


def step_coverage(
    scenarios: Sequence[Scenario], calibrator: ConformalRiskCalibrator
) -> tuple[float, dict]:
    """Strict per-step conformal coverage on categorized objects.

    A step is covered when its realized nonconformity does not exceed the
    calibrated quantile for that (category, step). Returns the overall
    mean and a per-category breakdown.
    """
    hits: dict = {}
    totals: dict = {}
    for scenario in scenarios:
        for window in windows(scenario):
            for obj in window.objects:
                if obj.category is None or obj.dropped:
                    continue
                qs = calibrator.quantiles(obj.category)
                for t in range(len(obj.scores)):
                    s = abs(float(obj.gt[t]) - float(obj.scores[t]))
                    hits[obj.category] = hits.get(obj.category, 0) + int(s <= qs[t])
                    totals[obj.category] = totals.get(obj.category, 0) + 1
    if not totals:
        raise ValueError("no categorized objects to measure coverage on")
    per_category = {cat: hits[cat] / totals[cat] for cat in totals}
    overall = sum(hits.values()) / sum(totals.values())
    return overall, per_category


def stream_coverage(
    scenarios: Sequence[Scenario],
    calibrator: ConformalRiskCalibrator,
    online: bool,
) -> np.ndarray:
    """Per-sample coverage flags over the (window, object, step) stream in
    deterministic sweep order, optionally adapting the calibrator as it
    goes. Used to study distribution shift."""
    flags = []
    cal = calibrator
    for scenario in scenarios:
        for window in windows(scenario):
            for obj in window.objects:
                if obj.category is None or obj.dropped:
                    continue
                qs = cal.quantiles(obj.category)
                for t in range(len(obj.scores)):
                    err = int(abs(float(obj.gt[t]) - float(obj.scores[t])) > qs[t])
                    flags.append(1 - err)
                    if online:
                        cal = cal.update(obj.category, t, err)
    return np.asarray(flags, dtype=np.int8)


def window_tubes_for_clip(
    scenario: Scenario,
    method: str,
    calibrator: ConformalRiskCalibrator | None = None,
    policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE,
) -> dict[int, RiskTube]:
    """Predicted tube per window anchor, keyed by anchor frame."""
    return {
        window.start: predict_window_tube(window, method, calibrator, policy)
        for window in windows(scenario)
    }


def brake_report(
    scenarios: Sequence[Scenario],
    calibrator: ConformalRiskCalibrator,
    gate: GateConfig = GateConfig(),
) -> dict[str, dict]:
    """Average and misaligned brake counts for ground truth, the
    distance-only gate (rule tubes), the hard threshold, and the
    calibrated tubes."""
    per_method_seqs: dict[str, list[np.ndarray]] = {
        "gt": [],
        "distance": [],
        "hd": [],
        "ours": [],
    }
    mbcs: dict[str, list[int]] = {"distance": [], "hd": [], "ours": []}
    for scenario in scenarios:
        gt_seq = gt_brake_sequence(scenario, gate)
        per_method_seqs["gt"].append(gt_seq)
        for method, key in (("rule", "distance"), ("hd", "hd"), ("ours", "ours")):
            tubes = window_tubes_for_clip(scenario, method, calibrator, gate.ambiguity_policy)
            seq = brake_sequence(scenario, tubes, gate)
            per_method_seqs[key].append(seq)
            mbcs[key].append(misaligned_brake_count(seq, gt_seq))
    report = {}
    for key, seqs in per_method_seqs.items():
        report[key] = {
            "average_brake_count": average_brake_count(seqs),
            "misaligned_brake_count": (
                None if key == "gt" else float(np.mean(mbcs[key]))
            ),
        }
    return report
