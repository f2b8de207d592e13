"""Data augmentation for imitation-learning demonstration datasets:
counterfactual resampling over causal state partitions, SE(3)-equivariant
sub-trajectory retargeting, and standard observation augmentations,
validated against a built-in kinematic simulator with scripted experts."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    Action,
    Dataset,
    EntityState,
    Provenance,
    RobotState,
    TaskSchema,
    Timestep,
    Trajectory,
    load_dataset,
    save_dataset,
    slice_subtrajectory,
)
from .geometry import Pose, SE3Transform, relative_transform  # noqa: F401
