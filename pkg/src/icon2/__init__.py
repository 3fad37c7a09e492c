"""Attribute-conditioned detection auditing.

Loads COCO-style ground truth and detections plus per-image or per-instance
attribute files, computes group-normalized AP per sensitive attribute value,
ranks explanatory attributes by how much of the AP spread they could account
for, and re-measures the spread inside each explanatory stratum.
"""

__version__ = "0.1.0"

from .core import (
    AuditConfig,
    ControlReport,
    FairnessReport,
    RankingEntry,
    SpreadStats,
    ap_spread,
    audit,
    conditional_distribution,
    controlled_ap,
    variance_reduction,
    proxy_ap,
    rank_confounders,
)
from .data_model import (
    AttributeKind,
    AttributeLevel,
    AttributeSchema,
    BBox,
    Dataset,
    DetectionInstance,
    GroundTruthInstance,
    ImageRecord,
)
from .errors import Icon2Error, UndefinedAPError, UsageError
from .ingest import (
    BinningSpec,
    SidecarAttributeFile,
    attach_attributes,
    bin_continuous,
    load_detections,
    load_ground_truth,
    read_sidecar,
)
from .matching import (
    APResult,
    InsufficientDataError,
    MatchConfig,
    attribute_ap_sweep,
    average_precision,
    bootstrap_ci,
    group_ap,
    iou,
    match_detections,
    pr_curve,
    precision_curve,
)
from .synth import ScenarioSpec, generate_scenario, write_scenario

__all__ = [
    "AuditConfig",
    "ControlReport",
    "FairnessReport",
    "RankingEntry",
    "SpreadStats",
    "ap_spread",
    "audit",
    "conditional_distribution",
    "controlled_ap",
    "variance_reduction",
    "proxy_ap",
    "rank_confounders",
    "AttributeKind",
    "AttributeLevel",
    "AttributeSchema",
    "BBox",
    "Dataset",
    "DetectionInstance",
    "GroundTruthInstance",
    "ImageRecord",
    "Icon2Error",
    "UndefinedAPError",
    "UsageError",
    "BinningSpec",
    "SidecarAttributeFile",
    "attach_attributes",
    "bin_continuous",
    "load_detections",
    "load_ground_truth",
    "read_sidecar",
    "APResult",
    "InsufficientDataError",
    "MatchConfig",
    "attribute_ap_sweep",
    "average_precision",
    "bootstrap_ci",
    "group_ap",
    "iou",
    "match_detections",
    "pr_curve",
    "precision_curve",
    "ScenarioSpec",
    "generate_scenario",
    "write_scenario",
]
