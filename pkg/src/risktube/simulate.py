"""Seeded synthetic driving-risk scenarios for exercising calibration,
metrics, and brake gating at desk scale.

Everything here is generated: per-object risk labels, surrogate model
scores, and ego distances come from parametric templates plus seeded
noise, not from any recorded driving data or simulator capture. Numbers
computed on these scenarios characterize this generator only.

Each scenario is a clip of ``length`` frames containing one risk object
per configured category plus optional distractors. A risk object carries
one contiguous ground-truth risk interval placed by its category template:

* interaction: mid-clip interval with a gradual onset ramp,
* collision: late interval with a sharp onset,
* obstacle: long, stable interval starting early,
* occlusion: mid-clip interval with high-variance scores.

Surrogate scores are the template's clean ramp plus Gaussian noise with a
per-category scale, clamped to [0, 1]. A ``box_noise`` level in [0, 1]
emulates perception errors: frames are dropped (object unseen) with
probability ``box_noise`` and scores are replaced by uniform garbage with
probability ``0.25 * box_noise``. Distances follow a linear approach that
crosses 10 m inside the risk interval, then recedes; distractors stay
above 15 m.

Determinism: all randomness flows through numpy's PCG64. A scenario is a
pure function of (config, seed); the base content and the perception
noise use two generators spawned from the scenario seed via
``SeedSequence(seed, spawn_key=(0,))`` and ``(1,)`` so that the same seed
yields the same underlying scenario at every box-noise level. Dataset
generation derives per-scenario seeds as the first 8 bytes of
SHA-256("risktube/{master_seed}/{config_index}/{instance_index}").
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tube import RiskCategory
from .validation import check_horizon

SCENARIO_SCHEMA = "risktube/scenario/v1"

#: Per-category Gaussian noise scales; occlusion is deliberately hardest.
DEFAULT_NOISE: dict[RiskCategory, float] = {
    RiskCategory.INTERACTION: 0.10,
    RiskCategory.COLLISION: 0.05,
    RiskCategory.OCCLUSION: 0.25,
    RiskCategory.OBSTACLE: 0.08,
}

_BACKGROUND = 0.02
_DISTRACTOR_SIGMA = 0.05
_CONFUSE_FRACTION = 0.25
_APPROACH_RATE = 1.5  # metres per frame
_MIN_DISTANCE = 2.0


class Topology(enum.Enum):
    """Coarse road layout of a scenario; shifts where risk onsets occur."""

    STRAIGHT = "straight"
    T_JUNCTION = "t_junction"
    FOUR_WAY = "four_way"


@dataclass(frozen=True)
class _Template:
    """Clean score ramp and placement rule for one risk category."""

    length_range: tuple[int, int]
    placement: str  # "mid", "late", or "early"
    interior: float
    onset_edge: float
    release_edge: float
    pre: tuple[float, ...]  # clean levels 1, 2 frames before onset
    post: tuple[float, ...]  # clean levels 1, ... frames after release


#: Template version "v1"; tests pin behaviour to these constants.
_TEMPLATES: dict[RiskCategory, _Template] = {
    RiskCategory.INTERACTION: _Template((2, 4), "mid", 0.95, 0.60, 0.60, (0.35, 0.15), (0.10,)),
    RiskCategory.COLLISION: _Template((2, 3), "late", 0.95, 0.90, 0.60, (0.30, 0.10), (0.10,)),
    RiskCategory.OCCLUSION: _Template((2, 4), "mid", 0.85, 0.60, 0.60, (0.35, 0.15), (0.10,)),
    RiskCategory.OBSTACLE: _Template((4, 6), "early", 0.95, 0.70, 0.70, (0.30, 0.10), (0.10,)),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Recipe for one synthetic scenario."""

    n_objects: int = 2
    categories: tuple[RiskCategory, ...] = (RiskCategory.INTERACTION,)
    topology: Topology = Topology.STRAIGHT
    horizon: int = 8
    length: int = 8
    noise: dict[RiskCategory, float] = field(default_factory=lambda: dict(DEFAULT_NOISE))
    box_noise: float = 0.0

    def __post_init__(self) -> None:
        check_horizon(self.horizon)
        if self.length < self.horizon:
            raise ValueError(
                f"length ({self.length}) must be >= horizon ({self.horizon})"
            )
        if self.n_objects < len(self.categories):
            raise ValueError(
                f"n_objects ({self.n_objects}) must cover all categories "
                f"({len(self.categories)})"
            )
        for cat, sigma in self.noise.items():
            if sigma < 0:
                raise ValueError(f"noise scale for {cat} must be >= 0, got {sigma!r}")
        if not 0.0 <= self.box_noise <= 1.0:
            raise ValueError(f"box_noise must be in [0, 1], got {self.box_noise!r}")

    def to_dict(self) -> dict:
        return {
            "n_objects": self.n_objects,
            "categories": [c.value for c in self.categories],
            "topology": self.topology.value,
            "horizon": self.horizon,
            "length": self.length,
            "noise": {c.value: float(s) for c, s in sorted(self.noise.items(), key=lambda kv: kv[0].value)},
            "box_noise": self.box_noise,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ScenarioConfig":
        try:
            return cls(
                n_objects=int(payload["n_objects"]),
                categories=tuple(RiskCategory(c) for c in payload["categories"]),
                topology=Topology(payload.get("topology", "straight")),
                horizon=int(payload.get("horizon", 8)),
                length=int(payload.get("length", payload.get("horizon", 8))),
                noise={
                    RiskCategory(c): float(s)
                    for c, s in payload.get(
                        "noise", {c.value: s for c, s in DEFAULT_NOISE.items()}
                    ).items()
                },
                box_noise=float(payload.get("box_noise", 0.0)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"invalid scenario config: {exc}") from exc


@dataclass(frozen=True)
class ObjectTrack:
    """Per-frame ground truth and surrogate outputs for one object."""

    object_id: str
    category: RiskCategory | None
    gt_risk: np.ndarray  # bool, shape (length,)
    scores: np.ndarray  # float in [0, 1], shape (length,)
    clean_scores: np.ndarray  # template ramp before any noise
    distance_m: np.ndarray  # float > 0, shape (length,)
    dropped: np.ndarray  # bool, shape (length,)


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    seed: int
    config: ScenarioConfig
    objects: tuple[ObjectTrack, ...]


@dataclass(frozen=True)
class WindowObject:
    """One object's slice of a horizon window, re-indexed to 0..H-1."""

    object_id: str
    category: RiskCategory | None
    scores: np.ndarray
    gt: np.ndarray  # int 0/1
    dropped: bool  # True when perception missed the object at the anchor frame


@dataclass(frozen=True)
class Window:
    start: int
    objects: tuple[WindowObject, ...]


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint scenario-id sets for training, calibration, and testing."""

    train: tuple[str, ...]
    calibration: tuple[str, ...]
    test: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "train": list(self.train),
            "calibration": list(self.calibration),
            "test": list(self.test),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DatasetSplit":
        return cls(
            train=tuple(payload["train"]),
            calibration=tuple(payload["calibration"]),
            test=tuple(payload["test"]),
        )


def derive_seed(master_seed: int, cfg_index: int, instance_index: int) -> int:
    """Per-scenario seed: first 8 bytes of a SHA-256 over the indices."""
    digest = hashlib.sha256(
        f"risktube/{master_seed}/{cfg_index}/{instance_index}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


def _place_interval(
    rng: np.random.Generator, template: _Template, topology: Topology, length: int
) -> tuple[int, int]:
    """Choose the inclusive [onset, release] frame interval."""
    lo, hi = template.length_range
    run = int(rng.integers(lo, hi + 1))
    run = min(run, length - 2)
    if template.placement == "late":
        release = length - 1 - int(rng.integers(0, 2))
        onset = max(1, release - run + 1)
        return onset, release
    if template.placement == "early":
        onset_lo, onset_hi = 1, max(1, round(0.2 * length))
    else:  # mid
        onset_lo = max(1, round(0.25 * length))
        onset_hi = max(onset_lo, round(0.5 * length))
        if topology is Topology.T_JUNCTION:
            onset_lo = min(onset_lo + 1, onset_hi)
        elif topology is Topology.FOUR_WAY:
            onset_lo = max(1, onset_lo - 1)
    onset_hi = min(onset_hi, length - 2 - (run - 1))
    onset_hi = max(onset_hi, 1)
    onset_lo = min(onset_lo, onset_hi)
    onset = int(rng.integers(onset_lo, onset_hi + 1))
    release = min(onset + run - 1, length - 2)
    return onset, release


def _clean_ramp(template: _Template, onset: int, release: int, length: int) -> np.ndarray:
    clean = np.full(length, _BACKGROUND)
    clean[onset : release + 1] = template.interior
    clean[onset] = template.onset_edge
    clean[release] = template.release_edge
    for i, level in enumerate(template.pre, start=1):
        if onset - i >= 0:
            clean[onset - i] = level
    for i, level in enumerate(template.post, start=1):
        if release + i < length:
            clean[release + i] = level
    return clean


def _risk_distance(onset: int, release: int, run: int, length: int) -> np.ndarray:
    """Linear approach crossing 10 m inside the risk interval, then recede."""
    crossing = onset + (run - 1) // 2
    t = np.arange(length)
    approach = 10.0 + (crossing - t) * _APPROACH_RATE
    closest = 10.0 + (crossing - release) * _APPROACH_RATE
    recede = closest + (t - release) * _APPROACH_RATE
    d = np.where(t <= release, approach, recede)
    return np.maximum(d, _MIN_DISTANCE)


def generate_scenario(cfg: ScenarioConfig, seed: int, scenario_id: str | None = None) -> Scenario:
    """Generate one scenario deterministically from (config, seed)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    rng_box = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1,))))
    length = cfg.length
    tracks: list[ObjectTrack] = []
    for idx in range(cfg.n_objects):
        object_id = f"obj-{idx}"
        if idx < len(cfg.categories):
            cat = cfg.categories[idx]
            template = _TEMPLATES[cat]
            onset, release = _place_interval(rng, template, cfg.topology, length)
            run = release - onset + 1
            gt = np.zeros(length, dtype=bool)
            gt[onset : release + 1] = True
            clean = _clean_ramp(template, onset, release, length)
            sigma = cfg.noise.get(cat, DEFAULT_NOISE[cat])
            distance = _risk_distance(onset, release, run, length)
        else:
            cat = None
            gt = np.zeros(length, dtype=bool)
            clean = np.full(length, _BACKGROUND)
            sigma = _DISTRACTOR_SIGMA
            base = rng.uniform(16.0, 26.0)
            distance = np.maximum(base + rng.normal(0.0, 0.3, size=length), 15.1)
        scores = np.clip(clean + sigma * rng.normal(0.0, 1.0, size=length), 0.0, 1.0)
        # Perception noise comes from its own stream so the underlying
        # scenario is identical across box_noise levels at a fixed seed.
        u_drop = rng_box.random(length)
        u_confuse = rng_box.random(length)
        confused_scores = rng_box.random(length)
        dropped = u_drop < cfg.box_noise
        confused = u_confuse < _CONFUSE_FRACTION * cfg.box_noise
        scores = np.where(confused, confused_scores, scores)
        tracks.append(
            ObjectTrack(
                object_id=object_id,
                category=cat,
                gt_risk=gt,
                scores=scores,
                clean_scores=clean,
                distance_m=distance,
                dropped=dropped,
            )
        )
    sid = scenario_id if scenario_id is not None else f"scenario-{seed:016x}"
    return Scenario(scenario_id=sid, seed=seed, config=cfg, objects=tuple(tracks))


def generate_dataset(
    cfgs: Sequence[ScenarioConfig], n_per_cfg: int, master_seed: int
) -> list[Scenario]:
    """Generate n_per_cfg scenarios per config with derived per-scenario seeds."""
    if n_per_cfg < 1:
        raise ValueError(f"n_per_cfg must be >= 1, got {n_per_cfg}")
    scenarios = []
    for ci, cfg in enumerate(cfgs):
        for ii in range(n_per_cfg):
            seed = derive_seed(master_seed, ci, ii)
            scenarios.append(
                generate_scenario(cfg, seed, scenario_id=f"s{ci:02d}-{ii:04d}")
            )
    return scenarios


def split_dataset(
    scenarios: Sequence[Scenario],
    ratios: tuple[int, int, int] = (8, 1, 1),
    seed: int = 0,
) -> DatasetSplit:
    """Seeded shuffle then contiguous cut into train/calibration/test.

    Split sizes follow the ratios by largest remainder, each part gets at
    least one scenario, and no scenario appears in more than one part.
    """
    n = len(scenarios)
    if n < 3:
        raise ValueError(f"need at least 3 scenarios to split, got {n}")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    total = sum(ratios)
    quotas = [r * n / total for r in ratios]
    sizes = [int(q) for q in quotas]
    fractions = [q - s for q, s in zip(quotas, sizes)]
    while sum(sizes) < n:
        i = max(range(3), key=lambda j: (fractions[j], -j))
        sizes[i] += 1
        fractions[i] = -1.0
    for i in range(3):  # guarantee non-empty parts
        while sizes[i] == 0:
            donor = max(range(3), key=lambda j: sizes[j])
            sizes[donor] -= 1
            sizes[i] += 1
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    order = rng.permutation(n)
    ids = [scenarios[i].scenario_id for i in order]
    train = tuple(sorted(ids[: sizes[0]]))
    calibration = tuple(sorted(ids[sizes[0] : sizes[0] + sizes[1]]))
    test = tuple(sorted(ids[sizes[0] + sizes[1] :]))
    return DatasetSplit(train=train, calibration=calibration, test=test)


def windows(scenario: Scenario, horizon: int | None = None) -> list[Window]:
    """All sliding horizon windows of a scenario, re-indexed to 0..H-1.

    An object is marked dropped in a window when perception missed it at
    the window's anchor frame.
    """
    h = check_horizon(horizon if horizon is not None else scenario.config.horizon)
    length = scenario.config.length
    if length < h:
        raise ValueError(f"scenario length {length} shorter than horizon {h}")
    out = []
    for start in range(length - h + 1):
        objs = tuple(
            WindowObject(
                object_id=track.object_id,
                category=track.category,
                scores=track.scores[start : start + h],
                gt=track.gt_risk[start : start + h].astype(np.int8),
                dropped=bool(track.dropped[start]),
            )
            for track in scenario.objects
        )
        out.append(Window(start=start, objects=objs))
    return out


# -- JSON Lines serialization -------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "schema": SCENARIO_SCHEMA,
        "id": scenario.scenario_id,
        "seed": scenario.seed,
        "config": scenario.config.to_dict(),
        "objects": [
            {
                "id": track.object_id,
                "category": track.category.value if track.category else None,
                "frames": [
                    {
                        "t": t,
                        "gt_risk": bool(track.gt_risk[t]),
                        "score": float(track.scores[t]),
                        "distance_m": float(track.distance_m[t]),
                        "dropped": bool(track.dropped[t]),
                    }
                    for t in range(scenario.config.length)
                ],
            }
            for track in scenario.objects
        ],
    }


def scenario_from_dict(payload: dict) -> Scenario:
    if payload.get("schema") != SCENARIO_SCHEMA:
        raise ValueError(f"unsupported scenario schema: {payload.get('schema')!r}")
    cfg = ScenarioConfig.from_dict(payload["config"])
    tracks = []
    for obj in payload["objects"]:
        frames = sorted(obj["frames"], key=lambda f: f["t"])
        if [f["t"] for f in frames] != list(range(cfg.length)):
            raise ValueError(f"object {obj['id']!r} does not cover frames 0..{cfg.length - 1}")
        scores = np.array([float(f["score"]) for f in frames])
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError(f"object {obj['id']!r} has scores outside [0, 1]")
        distance = np.array([float(f["distance_m"]) for f in frames])
        if distance.min() <= 0.0:
            raise ValueError(f"object {obj['id']!r} has non-positive distances")
        tracks.append(
            ObjectTrack(
                object_id=str(obj["id"]),
                category=RiskCategory(obj["category"]) if obj.get("category") else None,
                gt_risk=np.array([bool(f["gt_risk"]) for f in frames]),
                scores=scores,
                clean_scores=scores.copy(),
                distance_m=distance,
                dropped=np.array([bool(f.get("dropped", False)) for f in frames]),
            )
        )
    return Scenario(
        scenario_id=str(payload["id"]),
        seed=int(payload["seed"]),
        config=cfg,
        objects=tuple(tracks),
    )


def dump_scenarios(scenarios: Iterable[Scenario]) -> str:
    """Serialize scenarios as JSON Lines, one scenario per line."""
    return "".join(
        json.dumps(scenario_to_dict(s), sort_keys=True) + "\n" for s in scenarios
    )


def load_scenarios(text: str) -> list[Scenario]:
    """Parse a JSON Lines dataset, accepting externally produced scores."""
    out = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {i + 1} is not valid JSON: {exc}") from exc
        out.append(scenario_from_dict(payload))
    return out
