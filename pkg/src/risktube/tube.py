"""Core value types for risk tubes: per-step risk decisions over a fixed
future horizon, the intervals they induce, and exact interval algebra.

Timesteps are discrete indices 0..H-1 relative to the current frame;
intervals are inclusive on both ends, so interval length = end - start + 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .validation import check_horizon

MIN_HORIZON = 2
DEFAULT_HORIZON = 8


class Decision(enum.IntEnum):
    """Per-timestep risk decision."""

    NO_RISK = 0
    RISK = 1
    AMBIGUOUS = 2


class DecisionOrigin(enum.Enum):
    """Where a decision sequence came from."""

    GROUND_TRUTH = "ground_truth"
    CALIBRATED = "calibrated"
    HARD_THRESHOLD = "hard_threshold"
    RULE_BASED = "rule_based"


class RiskCategory(enum.Enum):
    """Risk category of a hazardous object.

    Declaration order is the tie-break order used by nearest-centroid
    category assignment.
    """

    INTERACTION = "interaction"
    COLLISION = "collision"
    OCCLUSION = "occlusion"
    OBSTACLE = "obstacle"


class AmbiguityPolicy(enum.Enum):
    """How AMBIGUOUS decisions are resolved when a binary view is needed.

    INCLUDE treats ambiguous steps as risky (the conservative default used
    for tube coverage and brake gating); EXCLUDE treats them as non-risky.
    """

    INCLUDE = "include"
    EXCLUDE = "exclude"


class RiskInterval(NamedTuple):
    """Inclusive timestep interval [start, end] within the horizon."""

    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class DecisionSeq:
    """A horizon-length sequence of risk decisions plus its origin.

    Ground-truth sequences must not contain AMBIGUOUS: the annotation is a
    binary label per step.
    """

    decisions: tuple[Decision, ...]
    origin: DecisionOrigin

    def __post_init__(self) -> None:
        check_horizon(len(self.decisions))
        if self.origin is DecisionOrigin.GROUND_TRUTH and any(
            d is Decision.AMBIGUOUS for d in self.decisions
        ):
            raise ValueError("ground-truth decision sequences cannot be ambiguous")

    def __len__(self) -> int:
        return len(self.decisions)

    def __getitem__(self, t: int) -> Decision:
        return self.decisions[t]

    def risky_steps(self, policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE) -> frozenset[int]:
        """Timesteps counted as risky under the given ambiguity policy."""
        return frozenset(
            t for t, d in enumerate(self.decisions) if _is_risky(d, policy)
        )

    def binarized(self, policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE) -> np.ndarray:
        """0/1 array with AMBIGUOUS resolved per policy."""
        return np.array(
            [1 if _is_risky(d, policy) else 0 for d in self.decisions], dtype=np.int8
        )


def _is_risky(d: Decision, policy: AmbiguityPolicy) -> bool:
    if d is Decision.RISK:
        return True
    if d is Decision.AMBIGUOUS:
        return policy is AmbiguityPolicy.INCLUDE
    return False


def decisions_from_labels(labels: Sequence[int] | np.ndarray) -> DecisionSeq:
    """Build a ground-truth DecisionSeq from 0/1 labels."""
    vals = tuple(Decision.RISK if int(v) else Decision.NO_RISK for v in labels)
    return DecisionSeq(vals, DecisionOrigin.GROUND_TRUTH)


@dataclass(frozen=True)
class TubeEntry:
    """One object's slice of a risk tube: decisions, the maximal risky
    intervals they induce, and the object's category (None if unknown)."""

    seq: DecisionSeq
    intervals: tuple[RiskInterval, ...]
    category: RiskCategory | None = None


@dataclass(frozen=True)
class RiskTube:
    """Per-object risk decisions over one horizon window.

    ``entries`` maps object id to a TubeEntry whose intervals are exactly
    the maximal runs of risky timesteps under ``policy``.
    """

    entries: Mapping[str, TubeEntry]
    policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE

    @classmethod
    def from_sequences(
        cls,
        seqs: Mapping[str, DecisionSeq],
        categories: Mapping[str, RiskCategory | None] | None = None,
        policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE,
    ) -> "RiskTube":
        categories = categories or {}
        entries = {
            obj: TubeEntry(
                seq=seq,
                intervals=tuple(intervals_from_decisions(seq, policy)),
                category=categories.get(obj),
            )
            for obj, seq in seqs.items()
        }
        return cls(entries=entries, policy=policy)

    def risky_steps(self, obj: str) -> frozenset[int]:
        return self.entries[obj].seq.risky_steps(self.policy)


def intervals_from_decisions(
    seq: DecisionSeq | Sequence[Decision],
    policy: AmbiguityPolicy = AmbiguityPolicy.INCLUDE,
) -> list[RiskInterval]:
    """Maximal runs of risky timesteps as inclusive intervals.

    INCLUDE counts AMBIGUOUS steps as risky, EXCLUDE as non-risky. The
    returned intervals are disjoint, sorted, and their union reproduces
    exactly the risky timesteps; an all-clear sequence yields [].
    """
    decisions = seq.decisions if isinstance(seq, DecisionSeq) else tuple(seq)
    intervals: list[RiskInterval] = []
    start: int | None = None
    for t, d in enumerate(decisions):
        if _is_risky(d, policy):
            if start is None:
                start = t
        elif start is not None:
            intervals.append(RiskInterval(start, t - 1))
            start = None
    if start is not None:
        intervals.append(RiskInterval(start, len(decisions) - 1))
    return intervals


def interval_iou(pred: Iterable[int], gt: Iterable[int]) -> float:
    """IoU of two risky-timestep sets: |pred & gt| / |pred | gt|.

    Two empty sets agree vacuously and score 1.0.
    """
    p, g = frozenset(pred), frozenset(gt)
    union = p | g
    if not union:
        return 1.0
    return len(p & g) / len(union)


def switch_count(seq: Sequence[int] | np.ndarray) -> int:
    """Number of adjacent unequal pairs in a binary sequence.

    Ambiguity must already be resolved; length must be at least 2.
    """
    arr = np.asarray(seq)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("switch_count needs a 1-d sequence of length >= 2")
    return int(np.count_nonzero(arr[1:] != arr[:-1]))
