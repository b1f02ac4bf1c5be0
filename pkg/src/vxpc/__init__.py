"""Lossless codec for voxelized point-cloud geometry.

Occupancy is coded with a context-adaptive binary arithmetic coder whose
probabilities come from a uniform, adaptive, or autoregressive neural
model, over a hybrid octree/voxel representation with rate-optimized
multi-resolution block partitioning.
"""

from .codec import (
    AdaptiveModel,
    NeuralModel,
    RunReport,
    UniformModel,
    bpov,
    decode_point_cloud,
    encode_point_cloud,
    make_model,
)
from .entropy import RangeDecoder, RangeEncoder
from .errors import FormatError, GeometryError, PlyError, VxpcError
from .geometry import PointCloud, load_ply, save_ply, voxelize
from .neural import (
    VoxelDnn,
    build_reference_model,
    build_tiny_model,
    read_model,
    train,
    write_model,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveModel",
    "FormatError",
    "GeometryError",
    "NeuralModel",
    "PlyError",
    "PointCloud",
    "RangeDecoder",
    "RangeEncoder",
    "RunReport",
    "UniformModel",
    "VoxelDnn",
    "VxpcError",
    "bpov",
    "build_reference_model",
    "build_tiny_model",
    "decode_point_cloud",
    "encode_point_cloud",
    "load_ply",
    "make_model",
    "read_model",
    "save_ply",
    "train",
    "voxelize",
    "write_model",
]
