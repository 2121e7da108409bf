"""risktube: conformal calibration, evaluation, and brake gating for
spatiotemporal risk tubes, with a seeded synthetic scenario generator."""

from .alignment import (
    FeatureTrack,
    NoValidTripletsError,
    alignment_loss,
    spatial_similarity,
    temporal_delta,
)
from .calibration import (
    CategoryOracle,
    ConformalRiskCalibrator,
    EmptyCalibrationError,
    HardDecisionBaseline,
    NearestCentroidCategorizer,
    NonconformityRecord,
    RuleBasedBaseline,
    calibrate_step,
    fit_quantile,
    nonconformity,
)
from .gating import (
    GateConfig,
    average_brake_count,
    brake_sequence,
    gt_brake_sequence,
    misaligned_brake_count,
)
from .metrics import (
    BoundaryConfig,
    MetricReport,
    boundary_alignment,
    coverage,
    evaluate,
    risk_iou,
    temporal_consistency,
    tube_volume,
)
from .simulate import (
    DatasetSplit,
    Scenario,
    ScenarioConfig,
    Topology,
    generate_dataset,
    generate_scenario,
    split_dataset,
    windows,
)
from .tube import (
    AmbiguityPolicy,
    Decision,
    DecisionOrigin,
    DecisionSeq,
    RiskCategory,
    RiskInterval,
    RiskTube,
    interval_iou,
    intervals_from_decisions,
    switch_count,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguityPolicy",
    "BoundaryConfig",
    "CategoryOracle",
    "ConformalRiskCalibrator",
    "DatasetSplit",
    "Decision",
    "DecisionOrigin",
    "DecisionSeq",
    "EmptyCalibrationError",
    "FeatureTrack",
    "GateConfig",
    "HardDecisionBaseline",
    "MetricReport",
    "NearestCentroidCategorizer",
    "NonconformityRecord",
    "NoValidTripletsError",
    "RiskCategory",
    "RiskInterval",
    "RiskTube",
    "RuleBasedBaseline",
    "Scenario",
    "ScenarioConfig",
    "Topology",
    "alignment_loss",
    "average_brake_count",
    "boundary_alignment",
    "brake_sequence",
    "calibrate_step",
    "coverage",
    "evaluate",
    "fit_quantile",
    "generate_dataset",
    "generate_scenario",
    "gt_brake_sequence",
    "interval_iou",
    "intervals_from_decisions",
    "misaligned_brake_count",
    "nonconformity",
    "risk_iou",
    "spatial_similarity",
    "split_dataset",
    "switch_count",
    "temporal_consistency",
    "temporal_delta",
    "tube_volume",
    "windows",
]
