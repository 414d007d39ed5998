"""Angle representations, losses, the toy estimator and multi-view fusion."""
from .angles import (
    AngleBinSet,
    AngleVector,
    angle_diff,
    bin_centers,
    decode_angle_vector,
    decode_bins,
    encode_angle_vector,
    encode_bins,
    fuse_estimates,
    global_to_local_yaw,
    local_to_global_yaw,
    wrap_angle,
    wrap_angles,
)
from .fusion import OrientationEstimate, estimate_orientation, strongest_view_yaw
from .losses import LossWeights, multitask_loss, smooth_l1, smooth_l1_grad
from .toy_model import (
    Augmentation,
    ToyEstimator,
    TrainConfig,
    estimator_forward,
    flip_target,
    predict_local_yaw,
    train_toy_estimator,
)

__all__ = [
    "OrientationEstimate",
    "estimate_orientation",
    "strongest_view_yaw",
    "AngleBinSet",
    "AngleVector",
    "Augmentation",
    "LossWeights",
    "ToyEstimator",
    "TrainConfig",
    "angle_diff",
    "bin_centers",
    "decode_angle_vector",
    "decode_bins",
    "encode_angle_vector",
    "encode_bins",
    "estimator_forward",
    "flip_target",
    "fuse_estimates",
    "global_to_local_yaw",
    "local_to_global_yaw",
    "multitask_loss",
    "predict_local_yaw",
    "smooth_l1",
    "smooth_l1_grad",
    "train_toy_estimator",
    "wrap_angle",
    "wrap_angles",
]
