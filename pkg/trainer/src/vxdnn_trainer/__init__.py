from .data import DatasetError, build_dataset, cloud_to_blocks, read_ply_points
from .export import model_to_bytes, read_weights, write_weights
from .model import REFERENCE_LAYOUT, TINY_LAYOUT, OccupancyNet, causal_mask
from .train import TrainingConfig, train_and_export, train_model

__all__ = [
    "DatasetError",
    "OccupancyNet",
    "REFERENCE_LAYOUT",
    "TINY_LAYOUT",
    "TrainingConfig",
    "build_dataset",
    "causal_mask",
    "cloud_to_blocks",
    "model_to_bytes",
    "read_ply_points",
    "read_weights",
    "train_and_export",
    "train_model",
    "write_weights",
]
