"""Point-cloud completion with multi-resolution spot attention.

Public surface: the tensor core (Tensor, Adam, checkpoints), geometry kernels
(FPS, ball query, Chamfer), the completion network, synthetic data, and the
training loop. See README.md for the CLI.
"""

from .config import RunConfig
from .geometry import (
    LossWeights,
    PointCloud,
    ball_query,
    chamfer_distance,
    composite_loss,
    farthest_point_sample,
    normalize_to_unit_sphere,
)
from .network import CompletionModel, ModelConfig, micro_config, paper_scale_config
from .tensor import Adam, LinearLayer, Tensor, load_checkpoint, save_checkpoint
from .train import train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "CompletionModel",
    "LinearLayer",
    "LossWeights",
    "ModelConfig",
    "PointCloud",
    "RunConfig",
    "Tensor",
    "ball_query",
    "chamfer_distance",
    "composite_loss",
    "farthest_point_sample",
    "load_checkpoint",
    "micro_config",
    "normalize_to_unit_sphere",
    "paper_scale_config",
    "save_checkpoint",
    "train",
    "__version__",
]
