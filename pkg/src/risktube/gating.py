"""Brake-alert gating: turn per-window risk tubes plus ego distance into
per-frame brake decisions, and score them against ground truth.

A frame triggers a brake alert when some object is flagged risky at the
current step of its tube and that object is closer than the distance
threshold. Ambiguous flags brake by default (conservative). The
ground-truth brake sequence applies the same gate to ground-truth labels.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .simulate import Scenario
from .tube import AmbiguityPolicy, RiskTube


@dataclass(frozen=True)
class GateConfig:
    distance_threshold_m: float = 10.0
    ambiguity_policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE

    def __post_init__(self) -> None:
        if not self.distance_threshold_m > 0:
            raise ValueError(
                f"distance threshold must be positive, got {self.distance_threshold_m!r}"
            )


def _flag_at_frame(
    tubes: dict[int, RiskTube], obj: str, frame: int, last_window: int, policy: AmbiguityPolicy
) -> bool:
    """Risk flag for an object at an absolute frame.

    Uses step 0 of the window anchored at the frame; the trailing frames
    beyond the last anchor fall back to the later steps of the final
    window. Objects absent from a window (e.g. dropped) are not risky.
    """
    anchor = min(frame, last_window)
    step = frame - anchor
    if anchor not in tubes:
        raise ValueError(f"missing tube for window {anchor}")
    tube = tubes[anchor]
    if obj not in tube.entries:
        return False
    return step in tube.entries[obj].seq.risky_steps(policy)


def brake_sequence(
    scenario: Scenario, tubes: dict[int, RiskTube], cfg: GateConfig = GateConfig()
) -> np.ndarray:
    """Per-frame brake decisions (0/1) over the whole clip.

    Frame T brakes iff some object is flagged risky at that frame and its
    distance at T is below the threshold. ``tubes`` must contain one
    RiskTube per window anchor 0..length-horizon.
    """
    length = scenario.config.length
    horizon = scenario.config.horizon
    last_window = length - horizon
    for anchor in range(last_window + 1):
        if anchor not in tubes:
            raise ValueError(f"missing tube for window {anchor}")
    out = np.zeros(length, dtype=np.int8)
    for frame in range(length):
        for track in scenario.objects:
            if track.distance_m[frame] >= cfg.distance_threshold_m:
                continue
            if _flag_at_frame(tubes, track.object_id, frame, last_window, cfg.ambiguity_policy):
                out[frame] = 1
                break
    return out


def gt_brake_sequence(scenario: Scenario, cfg: GateConfig = GateConfig()) -> np.ndarray:
    """Ground-truth brakes: same gate applied to ground-truth risk labels."""
    length = scenario.config.length
    out = np.zeros(length, dtype=np.int8)
    for track in scenario.objects:
        close = track.distance_m < cfg.distance_threshold_m
        out |= (track.gt_risk & close).astype(np.int8)
    return out[:length]


def misaligned_brake_count(pred, gt) -> int:
    """Hamming distance between brake sequences: false negatives plus
    false positives."""
    p = np.asarray(pred, dtype=np.int8)
    g = np.asarray(gt, dtype=np.int8)
    if p.shape != g.shape:
        raise ValueError(f"brake sequences differ in length: {p.shape} vs {g.shape}")
    return int(np.count_nonzero(p != g))


def average_brake_count(seqs) -> float:
    """Mean per-clip count of brake frames."""
    seqs = list(seqs)
    if not seqs:
        raise ValueError("average brake count needs at least one clip")
    return float(np.mean([int(np.sum(np.asarray(s))) for s in seqs]))


def brake_trace_rows(
    scenario: Scenario,
    pred: np.ndarray,
    gt: np.ndarray,
    cfg: GateConfig = GateConfig(),
) -> list[dict]:
    """Audit rows (frame, pred, gt, any_object_within_threshold) per frame."""
    rows = []
    for frame in range(scenario.config.length):
        within = any(
            track.distance_m[frame] < cfg.distance_threshold_m
            for track in scenario.objects
        )
        rows.append(
            {
                "frame": frame,
                "pred": int(pred[frame]),
                "gt": int(gt[frame]),
                "any_object_within_threshold": int(within),
            }
        )
    return rows


def brake_trace_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    fieldnames = ["frame", "pred", "gt", "any_object_within_threshold"]
    extra = [k for k in rows[0] if k not in fieldnames] if rows else []
    writer = csv.DictWriter(buf, fieldnames=extra + fieldnames)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()
