"""Refracted light-field features.

A background point seen through a curved refractive object no longer
behaves like a Lambertian point: its light-field observations fit an
astigmatic lens model with two focal depths and two focal-line axes. This
package fits that six-parameter model [px, py, pz1, pz2, theta1, theta2]
to multi-view observations, classifies features as Lambertian or
refracted, and exports their characteristic 3D points as 2D features for
structure-from-motion tools.
"""

__version__ = "0.1.0"

from .config import PipelineConfig
from .errors import (
    BehindCameraError,
    BoundsError,
    ConfigError,
    DataError,
    DegenerateGeometryError,
    FeatureRejected,
    InsufficientViewsError,
    IntrinsicsError,
    KeypointFileError,
    OffsetUnrecoverableError,
    RejectionReason,
    RlffError,
)
from .estimator import (
    CharacteristicPoints,
    Decomposition,
    FeatureClass,
    FitDiagnostics,
    FitMatrices,
    Rlff,
    asymmetry_residual,
    classify,
    decompose,
    extract_rlff,
    fit_linear_system,
    interval_of_sturm,
    reconstruct_hr,
    recover_offsets,
    symmetrize,
    view_diversity,
)
from .export import (
    ExportConfig,
    Feature2D,
    assign_descriptors,
    export_characteristic_points,
    export_stats,
    project_mono,
    project_stereo,
    read_feature_file,
    write_feature_file,
)
from .geometry import (
    DiscreteSample,
    LFIntrinsics,
    Line3D,
    Point3D,
    Ray4D,
    crop_views,
    decode_sample,
    depth_of_slope,
    make_intrinsics,
    project_lambertian,
    slope_of_depth,
)
from .lens import (
    AstigmaticLensModel,
    FocalLines,
    ObservationSet,
    focal_lines,
    h_from_model,
    synth_observations,
)
from .pipeline import (
    FeatureTrack,
    Keypoint,
    PipelineResult,
    RejectionRecord,
    ingest_keypoints,
    match_across_views,
    parse_keypoint_file,
    run_pipeline,
    tracks_to_observations,
)

__all__ = [
    "__version__",
    # geometry
    "Ray4D", "DiscreteSample", "Point3D", "Line3D", "LFIntrinsics",
    "decode_sample", "project_lambertian", "slope_of_depth", "depth_of_slope",
    "make_intrinsics", "crop_views",
    # lens
    "AstigmaticLensModel", "ObservationSet", "FocalLines",
    "h_from_model", "synth_observations", "focal_lines",
    # estimator
    "FitMatrices", "Rlff", "FitDiagnostics", "FeatureClass",
    "CharacteristicPoints", "Decomposition",
    "view_diversity", "fit_linear_system", "symmetrize", "decompose",
    "reconstruct_hr", "recover_offsets", "asymmetry_residual", "extract_rlff",
    "classify", "interval_of_sturm",
    # pipeline
    "Keypoint", "FeatureTrack", "PipelineResult", "RejectionRecord",
    "parse_keypoint_file", "ingest_keypoints", "match_across_views",
    "tracks_to_observations", "run_pipeline",
    # export
    "ExportConfig", "Feature2D",
    "project_mono", "project_stereo", "assign_descriptors",
    "write_feature_file", "read_feature_file",
    "export_characteristic_points", "export_stats",
    # config + errors
    "PipelineConfig",
    "RlffError", "DataError", "IntrinsicsError", "BoundsError",
    "KeypointFileError", "ConfigError", "InsufficientViewsError",
    "DegenerateGeometryError", "BehindCameraError",
    "OffsetUnrecoverableError", "FeatureRejected", "RejectionReason",
]
