"""Illumination correction for orthogonally raster-scanned volumes.

Fits one multiplicative per-A-scan illumination curve per volume, spline
parameterized, by matching each volume against its orthogonally scanned
counterparts in the log domain under a zero-sum constraint.
"""

from . import backends
from .correction import EnfaceImage, apply_correction, enface, merge
from .errors import (
    DivergedNonFiniteError,
    IoFailureError,
    NoOrthogonalTargetError,
    ValidationError,
)
from .metrics import (
    EvaluationReport,
    applied_correction_curves,
    evaluate_pair,
    illumination_recovery_error,
    mad_between_enfaces,
    pair_enfaces,
    scanline_jumps,
)
from .objective import (
    CorrectionProblem,
    ObjectiveReport,
    VolumeEntry,
    build_problem,
    evaluate,
    project_constraint,
    zero_fields,
)
from .optimizer import (
    IterationRecord,
    OptimizationTrace,
    OptimizerConfig,
    TerminationReason,
    default_config,
    optimize,
)
from .phantom import PhantomSpec, PhantomTruth, generate_pair, simulate_scan
from .pipeline import CorrectionResult, RunConfig, run_correction
from .preprocessing import ForegroundMask, build_mask, log_transform
from .spline import CorrectionField, KnotLayout, build_knot_layout, eval_field
from .volume import (
    GeometryKind,
    LogVolume,
    RasterVolume,
    RegisteredGeometry,
    ScanDirection,
    new_raster_volume,
    orthogonal,
)

__version__ = "0.1.0"

__all__ = [
    "backends",
    "EnfaceImage",
    "apply_correction",
    "enface",
    "merge",
    "DivergedNonFiniteError",
    "IoFailureError",
    "NoOrthogonalTargetError",
    "ValidationError",
    "EvaluationReport",
    "applied_correction_curves",
    "evaluate_pair",
    "illumination_recovery_error",
    "mad_between_enfaces",
    "pair_enfaces",
    "scanline_jumps",
    "CorrectionProblem",
    "ObjectiveReport",
    "VolumeEntry",
    "build_problem",
    "evaluate",
    "project_constraint",
    "zero_fields",
    "IterationRecord",
    "OptimizationTrace",
    "OptimizerConfig",
    "TerminationReason",
    "default_config",
    "optimize",
    "PhantomSpec",
    "PhantomTruth",
    "generate_pair",
    "simulate_scan",
    "CorrectionResult",
    "RunConfig",
    "run_correction",
    "ForegroundMask",
    "build_mask",
    "log_transform",
    "CorrectionField",
    "KnotLayout",
    "build_knot_layout",
    "eval_field",
    "GeometryKind",
    "LogVolume",
    "RasterVolume",
    "RegisteredGeometry",
    "ScanDirection",
    "new_raster_volume",
    "orthogonal",
    "__version__",
]
