"""Split conformal calibration of risk-score tubes.

A calibrator turns raw per-step risk scores in [0, 1] into three-way
decisions (risk / no risk / ambiguous) with a marginal coverage guarantee.
Nonconformity is the absolute gap between the binary ground-truth label and
the predicted score; the calibrated threshold is the conservative empirical
quantile of calibration nonconformities, maintained separately per risk
category and per horizon step. An optional online update nudges the
effective miscoverage level after each observed outcome, widening or
shrinking the ambiguous buffer zone.

Also provides the hard-threshold and always-risky baselines and the
category assignment helpers (oracle passthrough and a nearest-centroid
stub) behind the same estimator-style API.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .tube import (
    Decision,
    DecisionOrigin,
    DecisionSeq,
    RiskCategory,
    switch_count,
)
from .validation import (
    check_categories,
    check_horizon,
    check_label_matrix,
    check_open_unit_interval,
    check_score_matrix,
    check_unit_interval,
)

DEFAULT_ALPHA = 0.1
DEFAULT_GAMMA = 0.01
DEFAULT_ALPHA_MIN = 0.01
DEFAULT_ALPHA_MAX = 0.5

#: Bucket key for the category-agnostic (pooled) calibrator.
POOLED = "pooled"


class EmptyCalibrationError(ValueError):
    """Raised when a quantile is requested from an empty score list."""


class NonconformityRecord(NamedTuple):
    """One calibration observation: a category, a horizon step, and the
    nonconformity score observed there."""

    category: RiskCategory
    step: int
    score: float


def nonconformity(gt_label: int, pred_score: float) -> float:
    """Absolute gap |label - score| between ground truth and prediction."""
    if gt_label not in (0, 1):
        raise ValueError(f"gt_label must be 0 or 1, got {gt_label!r}")
    check_unit_interval(pred_score, "pred_score")
    return abs(gt_label - pred_score)


def conformal_rank(n: int, alpha: float) -> int:
    """Order-statistic index k = ceil((n+1)(1-alpha)), evaluated exactly.

    The arithmetic runs over rationals so that values such as
    10 * 0.9 = 9 never round up to a spurious 10.
    """
    check_open_unit_interval(alpha, "alpha")
    return math.ceil((n + 1) * (1 - Fraction(alpha)))


def fit_quantile(scores: Sequence[float] | np.ndarray, alpha: float) -> float:
    """Conservative empirical (1-alpha)-quantile of nonconformity scores.

    Sorts ascending and returns the k-th smallest value with
    k = ceil((n+1)(1-alpha)). When k exceeds n the calibration set is too
    small to certify the level and the conservative cap 1.0 is returned.

    Raises EmptyCalibrationError for an empty score list.
    """
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0:
        raise EmptyCalibrationError("cannot fit a quantile on an empty score list")
    k = conformal_rank(arr.size, alpha)
    if k > arr.size:
        return 1.0
    return float(np.sort(arr)[k - 1])


def calibrate_step(pred_score: float, quantile: float) -> Decision:
    """Three-way decision for one step given the calibrated quantile q.

    Scores at or above 1-q are risk, at or below q are no risk, and the
    open buffer zone (q, 1-q) in between is ambiguous. Once q reaches 0.5
    the zone collapses (the two thresholds cross) and the rule degenerates
    to plain 0.5-thresholding with no ambiguous output.
    """
    p = check_unit_interval(pred_score, "pred_score")
    q = check_unit_interval(quantile, "quantile")
    if q >= 0.5:
        return Decision.RISK if p >= 0.5 else Decision.NO_RISK
    if p >= 1.0 - q:
        return Decision.RISK
    if p <= q:
        return Decision.NO_RISK
    return Decision.AMBIGUOUS


@dataclass(frozen=True)
class _Cell:
    """Calibration state for one (bucket, step): the retained sorted score
    list, the current quantile, and the effective miscoverage level."""

    scores: tuple[float, ...]
    quantile: float
    effective_alpha: float
    capped: bool

    @classmethod
    def fit(cls, scores: Iterable[float], alpha: float) -> "_Cell":
        srt = tuple(sorted(float(s) for s in scores))
        if not srt:
            return cls(scores=(), quantile=1.0, effective_alpha=alpha, capped=True)
        q = fit_quantile(srt, alpha)
        capped = conformal_rank(len(srt), alpha) > len(srt)
        return cls(scores=srt, quantile=q, effective_alpha=alpha, capped=capped)

    def at_level(self, effective_alpha: float) -> "_Cell":
        if not self.scores:
            return _Cell((), 1.0, effective_alpha, True)
        q = fit_quantile(self.scores, effective_alpha)
        capped = conformal_rank(len(self.scores), effective_alpha) > len(self.scores)
        return _Cell(self.scores, q, effective_alpha, capped)


def _category_key(category) -> str:
    if category is None:
        return POOLED
    if isinstance(category, RiskCategory):
        return category.value
    value = str(category)
    RiskCategory(value)  # raises on unknown names
    return value


class ConformalRiskCalibrator(BaseEstimator):
    """Category-aware split conformal calibrator for risk-score tubes.

    Parameters
    ----------
    alpha : float, default=0.1
        Target miscoverage level in (0, 1).
    gamma : float, default=0.01
        Online adaptation step size (>= 0). Zero disables adaptation and
        reduces ``update`` to the identity.
    alpha_min, alpha_max : float
        Clamp range for the adaptive effective level. ``alpha`` must lie
        inside the range.
    horizon : int, default=8
        Number of future timesteps per tube.
    category_aware : bool, default=True
        When False every tube is calibrated against the pooled quantiles,
        matching vanilla split conformal prediction.

    After ``fit`` the calibrator holds, per category and per step, the
    sorted nonconformity scores, the conservative empirical quantile, and
    the effective level (initially ``alpha``). Tubes whose category is
    unknown fall back to the pooled quantiles fitted from all categorized
    calibration records.

    A fitted calibrator is an immutable value: ``predict`` never mutates
    state and ``update`` returns a new calibrator.
    """

    def __init__(
        self,
        alpha: float = DEFAULT_ALPHA,
        gamma: float = DEFAULT_GAMMA,
        alpha_min: float = DEFAULT_ALPHA_MIN,
        alpha_max: float = DEFAULT_ALPHA_MAX,
        horizon: int = 8,
        category_aware: bool = True,
    ):
        self.alpha = alpha
        self.gamma = gamma
        self.alpha_min = alpha_min
        self.alpha_max = alpha_max
        self.horizon = horizon
        self.category_aware = category_aware

    # -- fitting -----------------------------------------------------------

    def _validate_params(self) -> None:
        check_open_unit_interval(self.alpha, "alpha")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")
        if not (0.0 < self.alpha_min <= self.alpha <= self.alpha_max < 1.0):
            raise ValueError(
                "need 0 < alpha_min <= alpha <= alpha_max < 1, got "
                f"({self.alpha_min!r}, {self.alpha!r}, {self.alpha_max!r})"
            )
        check_horizon(self.horizon)

    def fit(self, X, y, categories=None) -> "ConformalRiskCalibrator":
        """Fit per-(category, step) quantiles from calibration tubes.

        Parameters
        ----------
        X : array-like of shape (n_tubes, horizon)
            Predicted risk scores in [0, 1].
        y : array-like of shape (n_tubes, horizon)
            Binary ground-truth risk labels.
        categories : sequence of RiskCategory / str / None, optional
            Per-tube risk category. Uncategorized tubes contribute to no
            bucket; the pooled bucket is fitted from all categorized rows.
        """
        self._validate_params()
        X = check_score_matrix(X, self.horizon)
        y = check_label_matrix(y, X.shape)
        cats = check_categories(categories, X.shape[0])
        records = []
        for i in range(X.shape[0]):
            if cats[i] is None:
                continue
            cat = (
                cats[i]
                if isinstance(cats[i], RiskCategory)
                else RiskCategory(str(cats[i]))
            )
            for t in range(self.horizon):
                records.append(
                    NonconformityRecord(cat, t, abs(float(y[i, t]) - X[i, t]))
                )
        if not records:
            raise EmptyCalibrationError("no categorized calibration tubes to fit on")
        self._fit_records(records)
        return self

    def fit_records(self, records: Iterable[NonconformityRecord]) -> "ConformalRiskCalibrator":
        """Fit directly from precomputed nonconformity records."""
        self._validate_params()
        records = list(records)
        if not records:
            raise EmptyCalibrationError("no calibration records")
        self._fit_records(records)
        return self

    def _fit_records(self, records: list[NonconformityRecord]) -> None:
        grouped: dict[str, dict[int, list[float]]] = {
            c.value: {t: [] for t in range(self.horizon)} for c in RiskCategory
        }
        grouped[POOLED] = {t: [] for t in range(self.horizon)}
        for rec in records:
            if not 0 <= rec.step < self.horizon:
                raise ValueError(f"record step {rec.step} outside horizon {self.horizon}")
            score = check_unit_interval(rec.score, "nonconformity score")
            grouped[_category_key(rec.category)][rec.step].append(score)
            grouped[POOLED][rec.step].append(score)
        self.cells_ = {
            key: tuple(_Cell.fit(steps[t], self.alpha) for t in range(self.horizon))
            for key, steps in grouped.items()
        }
        self.n_records_ = len(records)
        return None

    # -- inspection --------------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "cells_"):
            raise ValueError("calibrator is not fitted; call fit() first")

    def _bucket(self, category) -> str:
        key = _category_key(category) if self.category_aware else POOLED
        return key if key in self.cells_ else POOLED

    def quantiles(self, category=None) -> np.ndarray:
        """Per-step quantiles used for the given category (pooled if None)."""
        self._check_fitted()
        return np.array([c.quantile for c in self.cells_[self._bucket(category)]])

    def effective_alphas(self, category=None) -> np.ndarray:
        self._check_fitted()
        return np.array(
            [c.effective_alpha for c in self.cells_[self._bucket(category)]]
        )

    def capped_steps(self, category=None) -> list[bool]:
        """Which steps of the category's calibrator hit the conservative cap."""
        self._check_fitted()
        return [c.capped for c in self.cells_[self._bucket(category)]]

    # -- prediction --------------------------------------------------------

    def predict(self, X, categories=None) -> np.ndarray:
        """Calibrated decisions, shape (n_tubes, horizon), values are
        Decision ints (0 no risk, 1 risk, 2 ambiguous)."""
        self._check_fitted()
        X = check_score_matrix(X, self.horizon)
        cats = check_categories(categories, X.shape[0])
        out = np.empty(X.shape, dtype=np.int8)
        for i in range(X.shape[0]):
            qs = self.quantiles(cats[i])
            for t in range(self.horizon):
                out[i, t] = int(calibrate_step(X[i, t], qs[t]))
        return out

    def predict_seq(self, scores, category=None) -> DecisionSeq:
        """Calibrate a single tube and wrap it as a DecisionSeq."""
        row = self.predict(np.asarray(scores, dtype=float)[np.newaxis, :], [category])[0]
        return DecisionSeq(tuple(Decision(int(v)) for v in row), DecisionOrigin.CALIBRATED)

    # -- online adaptation ---------------------------------------------------

    def update(self, category, step: int, err: int) -> "ConformalRiskCalibrator":
        """Return a calibrator with the (category, step) level adapted.

        ``err`` is 1 when the realized nonconformity exceeded the current
        quantile (a miscoverage event) and 0 otherwise. The effective level
        moves by gamma * (alpha - err), clamped to [alpha_min, alpha_max],
        and the quantile is recomputed from the retained score list. With
        gamma = 0 the calibrator is returned unchanged.
        """
        self._check_fitted()
        if err not in (0, 1):
            raise ValueError(f"err must be 0 or 1, got {err!r}")
        if not 0 <= step < self.horizon:
            raise ValueError(f"step {step} outside horizon {self.horizon}")
        if self.gamma == 0:
            return self
        key = self._bucket(category)
        cell = self.cells_[key][step]
        new_alpha = float(
            np.clip(
                cell.effective_alpha + self.gamma * (self.alpha - err),
                self.alpha_min,
                self.alpha_max,
            )
        )
        new = ConformalRiskCalibrator(**self.get_params())
        cells = {k: v for k, v in self.cells_.items()}
        steps = list(cells[key])
        steps[step] = cell.at_level(new_alpha)
        cells[key] = tuple(steps)
        new.cells_ = cells
        new.n_records_ = self.n_records_
        return new

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        """JSON-ready snapshot; round-trips bit-exactly through from_dict."""
        self._check_fitted()
        return {
            "schema": "risktube/calibrator/v1",
            "alpha": self.alpha,
            "gamma": self.gamma,
            "alpha_min": self.alpha_min,
            "alpha_max": self.alpha_max,
            "horizon": self.horizon,
            "category_aware": self.category_aware,
            "n_records": self.n_records_,
            "cells": {
                key: [
                    {
                        "scores": list(c.scores),
                        "quantile": c.quantile,
                        "effective_alpha": c.effective_alpha,
                        "capped": c.capped,
                    }
                    for c in steps
                ]
                for key, steps in self.cells_.items()
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ConformalRiskCalibrator":
        if payload.get("schema") != "risktube/calibrator/v1":
            raise ValueError(f"unsupported calibrator schema: {payload.get('schema')!r}")
        cal = cls(
            alpha=payload["alpha"],
            gamma=payload["gamma"],
            alpha_min=payload["alpha_min"],
            alpha_max=payload["alpha_max"],
            horizon=payload["horizon"],
            category_aware=payload["category_aware"],
        )
        cal.cells_ = {
            key: tuple(
                _Cell(
                    scores=tuple(c["scores"]),
                    quantile=c["quantile"],
                    effective_alpha=c["effective_alpha"],
                    capped=c["capped"],
                )
                for c in steps
            )
            for key, steps in payload["cells"].items()
        }
        cal.n_records_ = payload["n_records"]
        return cal

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ConformalRiskCalibrator":
        return cls.from_dict(json.loads(text))


class HardDecisionBaseline(BaseEstimator):
    """Deterministic baseline: risk iff the score reaches a fixed threshold."""

    def __init__(self, threshold: float = 0.5, horizon: int = 8):
        self.threshold = threshold
        self.horizon = horizon

    def fit(self, X=None, y=None, categories=None) -> "HardDecisionBaseline":
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold!r}")
        check_horizon(self.horizon)
        return self

    def predict(self, X, categories=None) -> np.ndarray:
        X = check_score_matrix(X, self.horizon)
        return (X >= self.threshold).astype(np.int8)

    def predict_seq(self, scores, category=None) -> DecisionSeq:
        row = self.predict(np.asarray(scores, dtype=float)[np.newaxis, :])[0]
        return DecisionSeq(
            tuple(Decision(int(v)) for v in row), DecisionOrigin.HARD_THRESHOLD
        )


class RuleBasedBaseline(BaseEstimator):
    """Maximally conservative baseline: every object risky at every step."""

    def __init__(self, horizon: int = 8):
        self.horizon = horizon

    def fit(self, X=None, y=None, categories=None) -> "RuleBasedBaseline":
        check_horizon(self.horizon)
        return self

    def predict(self, X, categories=None) -> np.ndarray:
        X = check_score_matrix(X, self.horizon)
        return np.ones(X.shape, dtype=np.int8)

    def predict_seq(self, scores, category=None) -> DecisionSeq:
        return DecisionSeq(
            tuple(Decision.RISK for _ in range(self.horizon)),
            DecisionOrigin.RULE_BASED,
        )


def track_features(scores) -> np.ndarray:
    """Summary features of a score tube used by the category stub:
    (mean, variance, switch count of the 0.5-thresholded sequence,
    argmax step)."""
    arr = check_score_matrix(scores)[0]
    hard = (arr >= 0.5).astype(np.int8)
    return np.array(
        [
            float(arr.mean()),
            float(arr.var()),
            float(switch_count(hard)),
            float(int(arr.argmax())),
        ]
    )


class CategoryOracle(BaseEstimator):
    """Category assignment by passthrough of the ground-truth hint."""

    def fit(self, X=None, y=None) -> "CategoryOracle":
        return self

    def predict(self, X, categories=None) -> list[RiskCategory]:
        X = check_score_matrix(X)
        cats = check_categories(categories, X.shape[0])
        out = []
        for c in cats:
            if c is None:
                raise ValueError("oracle category assignment requires a hint per tube")
            out.append(c if isinstance(c, RiskCategory) else RiskCategory(str(c)))
        return out


class NearestCentroidCategorizer(BaseEstimator):
    """Statistics-based category stub: nearest centroid over tube features.

    Centroids are the per-category means of ``track_features`` on the
    training tubes; prediction picks the centroid at minimal Euclidean
    distance, breaking ties by RiskCategory declaration order.
    """

    def fit(self, X, categories) -> "NearestCentroidCategorizer":
        X = check_score_matrix(X)
        cats = check_categories(categories, X.shape[0])
        feats: dict[RiskCategory, list[np.ndarray]] = {}
        for i, c in enumerate(cats):
            if c is None:
                continue
            cat = c if isinstance(c, RiskCategory) else RiskCategory(str(c))
            feats.setdefault(cat, []).append(track_features(X[i]))
        if not feats:
            raise ValueError("no categorized tubes to fit centroids on")
        self.centroids_ = {
            cat: np.mean(rows, axis=0) for cat, rows in feats.items()
        }
        return self

    def predict(self, X, categories=None) -> list[RiskCategory]:
        if not hasattr(self, "centroids_"):
            raise ValueError("categorizer is not fitted; call fit() first")
        X = check_score_matrix(X)
        out = []
        for i in range(X.shape[0]):
            f = track_features(X[i])
            best: RiskCategory | None = None
            best_d = np.inf
            for cat in RiskCategory:  # declaration order breaks ties
                if cat not in self.centroids_:
                    continue
                d = float(np.linalg.norm(f - self.centroids_[cat]))
                if d < best_d:
                    best, best_d = cat, d
            out.append(best)
        return out
