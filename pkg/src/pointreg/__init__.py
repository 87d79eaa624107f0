"""Weakly supervised 2D point-set registration.

Aligns unordered, partially overlapping keypoint sets by gradient-based
fitting of affine and thin-plate-spline transforms under nearest-neighbor,
Chamfer and cyclic-consistency losses, with PCK evaluation and synthetic
benchmarks.
"""

from .geometry import (
    AffineTransform,
    ComposedTransform,
    TpsTransform,
    affine_warp,
    as_point_set,
    compose,
    invert_affine,
    tps_warp,
    warp_jacobian,
)
from .losses import (
    Assignment,
    LossSpec,
    LossValue,
    evaluate_loss,
    loss_grid,
    loss_supervised,
    nn_assign,
)
from .metrics import PckConfig, PckReport, evaluate_batch, pck
from .optimizer import OptimizerConfig, RegistrationResult, gradient_check, register
from .synth import PairSample, SynthConfig, generate_pair, generate_pairs

__version__ = "0.1.0"

__all__ = [
    "AffineTransform",
    "Assignment",
    "ComposedTransform",
    "LossSpec",
    "LossValue",
    "OptimizerConfig",
    "PairSample",
    "PckConfig",
    "PckReport",
    "RegistrationResult",
    "SynthConfig",
    "TpsTransform",
    "affine_warp",
    "as_point_set",
    "compose",
    "evaluate_batch",
    "evaluate_loss",
    "generate_pair",
    "generate_pairs",
    "gradient_check",
    "invert_affine",
    "loss_grid",
    "loss_supervised",
    "nn_assign",
    "pck",
    "register",
    "tps_warp",
    "warp_jacobian",
]
