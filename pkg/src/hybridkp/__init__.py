"""Shared keypoint maps across object classes (StarMap, CanViewFeature, DepthMap).

Encoding/decoding of the five map channels, weak-perspective geometry,
closed-form viewpoint alignment, keypoint classification, evaluation metrics,
and a synthetic harness that stands in for a trained network.
"""
from ._accel import HAS_NUMBA, backend
from .alignment import (
    Correspondence,
    estimate_viewpoint,
    similarity_objective,
    solve_correspondences,
    solve_similarity,
    solve_weak_perspective_pnp,
)
from .codec import DetectedKeypoint, HybridMaps, encode_maps, extract_peaks, feature_mask, masked_l2_loss
from .dataset import (
    AnnotationRecord,
    CadModelKeypoints,
    derive_depth_labels,
    normalize_canonical,
    read_annotations,
    read_maps,
    read_template,
    write_annotations,
    write_maps,
    write_template,
)
from .errors import (
    ConvergenceError,
    DegenerateConfigurationError,
    HybridKPError,
    InsufficientKeypointsError,
    OutOfBoundsKeypointError,
)
from .geometry import (
    CameraModel,
    SimilarityTransform,
    Viewpoint,
    backproject_full_perspective,
    geodesic_distance,
    project_weak_perspective,
    recover_scale,
    rotation_from_viewpoint,
    unproject_weak_perspective,
    viewpoint_from_rotation,
)
from .metrics import (
    CategoryTemplate,
    EvalRecord,
    assign_oracle_ids,
    build_template,
    classify_keypoints,
    pck,
    viewpoint_scores,
)

__version__ = "0.1.0"
