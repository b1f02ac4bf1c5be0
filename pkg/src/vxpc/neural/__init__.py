from .model import (
    Conv3dLayer,
    VoxelDnn,
    build_reference_model,
    build_tiny_model,
    make_mask,
)
from .infer import (
    decode_block,
    forward_field,
    masked_conv_forward,
    pack_model,
    sequential_probs,
)
from .train import (
    AdamState,
    adam_step,
    backward,
    block_loss_bits,
    cross_entropy_bits,
    forward_probs64,
    train,
)
from .weights import model_checksum, model_to_bytes, read_model, write_model

__all__ = [
    "AdamState",
    "Conv3dLayer",
    "VoxelDnn",
    "adam_step",
    "backward",
    "block_loss_bits",
    "build_reference_model",
    "build_tiny_model",
    "cross_entropy_bits",
    "decode_block",
    "forward_field",
    "forward_probs64",
    "make_mask",
    "masked_conv_forward",
    "model_checksum",
    "model_to_bytes",
    "pack_model",
    "read_model",
    "sequential_probs",
    "train",
    "write_model",
]
