"""Spatiotemporal feature-alignment loss over per-object feature tracks.

For every ordered pair of distinct same-category objects (i, k) observed
at consecutive times t and t+1, the loss penalizes the squared mismatch
between their spatial cosine similarity at t and the difference of their
self-consecutive cosine similarities between t and t+1, averaged over all
valid (t, i, k) triplets. Both orderings of a pair are counted: the
temporal term is antisymmetric in (i, k) while the spatial term is
symmetric, so the two orderings contribute different squared terms.

Note the literal formula assigns loss 1.0 to two identical static tracks
of the same category (spatial similarity 1, temporal difference 0); this
is intentional and covered by tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tube import RiskCategory


class NoValidTripletsError(ValueError):
    """No same-category object pair shares two consecutive timesteps."""


@dataclass(frozen=True)
class FeatureTrack:
    """Latent feature vectors of one object over time.

    ``features`` maps timestep -> fixed-dimension vector; timesteps need
    not be contiguous, but every vector must share one dimension.
    """

    object_id: str
    category: RiskCategory
    features: Mapping[int, np.ndarray]

    @classmethod
    def from_array(
        cls, object_id: str, category: RiskCategory, array: Sequence[Sequence[float]]
    ) -> "FeatureTrack":
        arr = np.asarray(array, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"feature array must be 2-d (time, dim), got {arr.shape}")
        return cls(object_id, category, {t: arr[t] for t in range(arr.shape[0])})


def _norm(v: np.ndarray, eps: float) -> float:
    n = float(np.linalg.norm(v)) + eps
    if n == 0.0:
        raise ValueError("zero feature vector has no direction; pass eps > 0 to smooth")
    return n


def spatial_similarity(f_i: np.ndarray, f_k: np.ndarray, eps: float = 0.0) -> float:
    """Cosine similarity of two feature vectors at the same timestep."""
    f_i = np.asarray(f_i, dtype=float)
    f_k = np.asarray(f_k, dtype=float)
    if f_i.shape != f_k.shape:
        raise ValueError(f"feature dimensions differ: {f_i.shape} vs {f_k.shape}")
    return float(np.dot(f_i, f_k)) / (_norm(f_i, eps) * _norm(f_k, eps))


def temporal_delta(
    f_i_t: np.ndarray,
    f_i_t1: np.ndarray,
    f_k_t: np.ndarray,
    f_k_t1: np.ndarray,
    eps: float = 0.0,
) -> float:
    """Difference of the two self-consecutive cosine similarities."""
    return spatial_similarity(f_i_t, f_i_t1, eps) - spatial_similarity(f_k_t, f_k_t1, eps)


def valid_triplets(tracks: Sequence[FeatureTrack]) -> list[tuple[int, int, int]]:
    """All ordered (t, i, k) with i != k, matching categories, and both
    tracks carrying features at t and t+1. Indices refer to ``tracks``."""
    triplets = []
    times = sorted({t for track in tracks for t in track.features})
    for t in times:
        for i, track_i in enumerate(tracks):
            if t not in track_i.features or t + 1 not in track_i.features:
                continue
            for k, track_k in enumerate(tracks):
                if k == i or track_k.category is not track_i.category:
                    continue
                if t not in track_k.features or t + 1 not in track_k.features:
                    continue
                triplets.append((t, i, k))
    return triplets


def alignment_loss(tracks: Sequence[FeatureTrack], eps: float = 0.0) -> float:
    """Mean squared mismatch between spatial similarity and temporal delta
    over all valid ordered triplets.

    Raises NoValidTripletsError when no triplet exists, which is distinct
    from a genuine zero loss. ``eps`` (added to every norm) is an opt-in
    smoothing for callers that cannot rule out zero vectors.
    """
    triplets = valid_triplets(tracks)
    if not triplets:
        raise NoValidTripletsError(
            "no same-category object pair shares two consecutive timesteps"
        )
    terms = []
    for t, i, k in triplets:
        cos_spat = spatial_similarity(
            tracks[i].features[t], tracks[k].features[t], eps
        )
        delta = temporal_delta(
            tracks[i].features[t],
            tracks[i].features[t + 1],
            tracks[k].features[t],
            tracks[k].features[t + 1],
            eps,
        )
        terms.append((cos_spat - delta) ** 2)
    return math.fsum(terms) / len(terms)


def load_feature_tracks(text: str) -> list[FeatureTrack]:
    """Read feature tracks from JSON Lines rows
    {"object": ..., "category": ..., "t": ..., "vector": [...]}."""
    rows: dict[str, dict] = {}
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            obj = str(payload["object"])
            cat = RiskCategory(payload["category"])
            t = int(payload["t"])
            vec = np.asarray(payload["vector"], dtype=float)
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"line {i + 1} is not a valid feature row: {exc}") from exc
        entry = rows.setdefault(obj, {"category": cat, "features": {}})
        if entry["category"] is not cat:
            raise ValueError(f"object {obj!r} appears with two categories")
        if vec.ndim != 1:
            raise ValueError(f"line {i + 1}: vector must be 1-d")
        entry["features"][t] = vec
    tracks = []
    for obj, entry in rows.items():
        dims = {v.shape[0] for v in entry["features"].values()}
        if len(dims) > 1:
            raise ValueError(f"object {obj!r} has inconsistent feature dimensions {dims}")
        tracks.append(
            FeatureTrack(object_id=obj, category=entry["category"], features=entry["features"])
        )
    return tracks
