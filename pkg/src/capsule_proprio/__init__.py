"""Simulated joint-capsule receptors, a from-scratch pose network and receptor-importance analysis."""

__version__ = "0.1.0"

from .capsule_sim import (  # noqa: E402
    CapsuleGeometry,
    DriftModel,
    FailurePlan,
    Pose,
    TrajectoryConfig,
    default_geometry,
    generate_trajectory,
    simulate,
)
from .dataset import Dataset, Standardizer, TargetScaler, read_csv, split, standardize, write_csv  # noqa: E402
from .neuralnet import MlpModel, PoseRegressor, TrainConfig, init_model, make_pose_estimator, train  # noqa: E402

__all__ = [
    "CapsuleGeometry",
    "Dataset",
    "DriftModel",
    "FailurePlan",
    "MlpModel",
    "Pose",
    "PoseRegressor",
    "Standardizer",
    "TargetScaler",
    "TrainConfig",
    "TrajectoryConfig",
    "default_geometry",
    "generate_trajectory",
    "init_model",
    "make_pose_estimator",
    "read_csv",
    "simulate",
    "split",
    "standardize",
    "train",
    "write_csv",
]
