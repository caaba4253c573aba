"""Keypoint-based 6-DoF grasp geometry: encoding, planar PnP recovery, synthetic scenes and metrics."""
from .codec import (
    DEFAULT_TEMPLATE,
    BinSpec,
    EncodingArrays,
    GraspEncoding,
    KeypointSet,
    KeypointTemplate,
    decode_keypoints,
    encode,
    refine_scale,
)
from .detector import NoiseConfig, ScaleSource, resolve_scale, simulate_detections
from .errors import *  # noqa: F401,F403
from .evaluation import EvalThresholds, MetricsReport, evaluate, feasibility_filter, score_and_rank
from .geometry import CameraIntrinsics, Grasp, GraspSet, PixelPoint, Pose, Rotation, project, rotation_error
from .labels import LabelGridSpec, LabelTensors, LossWeights, decode_peaks, focal_loss, masked_l1, render_labels, total_loss
from .pnp import PnPResult, reprojection_error, solve_planar_pnp

__version__ = "0.1.0"
