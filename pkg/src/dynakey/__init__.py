"""Depth-aware static/dynamic keypoint classification for RGB-D SLAM front ends."""

__version__ = "0.1.0"

from .errors import DynakeyError
from .geometry import (
    CameraIntrinsics,
    EpipolarLine,
    FundamentalMatrix,
    PoseSE3,
    backproject,
    epipolar_line,
    estimate_fundamental_ransac,
    fundamental_from_poses,
    project,
    reprojection_error,
)
from .masks import MaskImage, Zone, beta, build_distance_field, mask_flags, semantic_moving_probability
from .motion import (
    ClassifierParams,
    Keypoints,
    State,
    alpha,
    bayes_update,
    classify,
    classify_frame,
    fuse,
    geometric_moving_probability,
    select_omega,
)
from .oim import (
    OimThresholds,
    apply_oim,
    build_interaction_zone,
    delta_threshold,
    find_supporting_dynamics,
    gamma_threshold,
    weighted_centroid,
)
from .dataset import associate, load_depth, load_sequence, parse_trajectory, write_trajectory
from .scene import SceneConfig, export_scene, generate_scene, load_config
from .pipeline import RunParams, run_sequence, score
from .evaluation import align_umeyama, ate_rmse, evaluate, improvement_rate, rpe

__all__ = [name for name in dir() if not name.startswith("_")]
