"""Masked 3D-convolution occupancy network.

The network maps a binary cube of side ``d`` to a per-voxel two-way softmax
over occupancy.  Causality comes from masked kernels: taps at or after the
kernel center in raster order are zeroed ("A" masks also zero the center,
"B" masks keep it), so each output depends only on voxels that precede it
in raster order.  One model serves every block side.

Inference runs in float32 with a fixed summation order (kernel taps in
raster order, skipping masked and out-of-bounds taps, input channels
innermost), which makes a whole-block forward pass reproduce, bit for bit,
what a sequential decoder sees; see :mod:`vxpc.neural.infer`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import VxpcError

MASK_NONE, MASK_A, MASK_B = 0, 1, 2
ACT_NONE, ACT_RELU = 0, 1
SKIP_NONE, SKIP_SAVE, SKIP_ADD = 0, 1, 2

_MASK_TAGS = {None: MASK_NONE, "A": MASK_A, "B": MASK_B}
_ACT_TAGS = {"none": ACT_NONE, "relu": ACT_RELU}
_SKIP_TAGS = {None: SKIP_NONE, "save": SKIP_SAVE, "add": SKIP_ADD}


def make_mask(k: int, kind: str) -> np.ndarray:
    """Binary (k, k, k) causality mask of the given type.

    Type A keeps the ``k**3 // 2`` taps strictly before the center in raster
    order; type B additionally keeps the center.
    """
    if k % 2 == 0:
        raise VxpcError(f"kernel side must be odd, got {k}")
    if kind not in ("A", "B"):
        raise VxpcError(f"mask type must be 'A' or 'B', got {kind!r}")
    center = k**3 // 2
    keep = center + (1 if kind == "B" else 0)
    mask = np.zeros(k**3, dtype=np.uint8)
    mask[:keep] = 1
    return mask.reshape(k, k, k)


@dataclass
class Conv3dLayer:
    """One stride-1, zero-padded 3D convolution with optional causal mask.

    ``skip`` wires residual connections: a "save" layer stashes its input,
    and the next "add" layer adds the stashed tensor to its own output.
    """

    mask: str | None
    k: int
    cin: int
    cout: int
    activation: str = "relu"
    skip: str | None = None
    weights: np.ndarray = field(default=None, repr=False)
    bias: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.k % 2 == 0:
            raise VxpcError(f"kernel side must be odd, got {self.k}")
        if self.mask not in _MASK_TAGS:
            raise VxpcError(f"unknown mask {self.mask!r}")
        if self.activation not in _ACT_TAGS:
            raise VxpcError(f"unknown activation {self.activation!r}")
        if self.skip not in _SKIP_TAGS:
            raise VxpcError(f"unknown skip mode {self.skip!r}")
        shape = (self.cout, self.cin, self.k, self.k, self.k)
        if self.weights is None:
            self.weights = np.zeros(shape, dtype=np.float32)
        if self.bias is None:
            self.bias = np.zeros(self.cout, dtype=self.weights.dtype)
        if self.weights.shape != shape:
            raise VxpcError(f"weights shape {self.weights.shape} != {shape}")
        if self.bias.shape != (self.cout,):
            raise VxpcError(f"bias shape {self.bias.shape} != ({self.cout},)")

    @property
    def mask_tag(self) -> int:
        return _MASK_TAGS[self.mask]

    @property
    def act_tag(self) -> int:
        return _ACT_TAGS[self.activation]

    @property
    def skip_tag(self) -> int:
        return _SKIP_TAGS[self.skip]

    def mask_array(self) -> np.ndarray:
        if self.mask is None:
            return np.ones((self.k, self.k, self.k), dtype=np.uint8)
        return make_mask(self.k, self.mask)

    def effective_weights(self) -> np.ndarray:
        """Weights with masked taps forced to exact zero."""
        if self.mask is None:
            return self.weights
        return self.weights * self.mask_array().astype(self.weights.dtype)

    def param_count(self) -> int:
        return self.weights.size + self.bias.size


class VoxelDnn:
    """Stack of masked convolutions ending in a per-voxel 2-way softmax."""

    def __init__(self, layers: list[Conv3dLayer]):
        if not layers:
            raise VxpcError("model needs at least one layer")
        if layers[0].mask != "A":
            raise VxpcError("first layer must carry an A mask")
        pending_save = None
        for i, layer in enumerate(layers):
            if i > 0 and layer.mask == "A":
                raise VxpcError("A masks are only valid on the first layer")
            if i > 0 and layers[i - 1].cout != layer.cin:
                raise VxpcError(
                    f"layer {i} expects {layer.cin} channels, "
                    f"gets {layers[i - 1].cout}"
                )
            if layer.skip == "save":
                if pending_save is not None:
                    raise VxpcError("nested residual connections unsupported")
                pending_save = layer.cin
            elif layer.skip == "add":
                if pending_save is None:
                    raise VxpcError("residual add without a matching save")
                if layer.cout != pending_save:
                    raise VxpcError(
                        f"residual add joins {layer.cout} channels to "
                        f"{pending_save}"
                    )
                pending_save = None
        if pending_save is not None:
            raise VxpcError("residual save without a matching add")
        if layers[-1].cout != 2:
            raise VxpcError("final layer must emit 2 channels for the softmax")
        self.layers = layers
        self._packed = None

    @property
    def dtype(self):
        return self.layers[0].weights.dtype

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def parameters(self) -> list[np.ndarray]:
        """Weight and bias arrays in layer order; mutating them is training's job."""
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.bias)
        return params

    def astype(self, dtype) -> "VoxelDnn":
        return VoxelDnn(
            [
                Conv3dLayer(
                    mask=l.mask,
                    k=l.k,
                    cin=l.cin,
                    cout=l.cout,
                    activation=l.activation,
                    skip=l.skip,
                    weights=l.weights.astype(dtype),
                    bias=l.bias.astype(dtype),
                )
                for l in self.layers
            ]
        )

    def packed(self):
        """Flat float32 view of the model for the numba kernels (cached)."""
        if self._packed is None:
            from .infer import pack_model

            self._packed = pack_model(self)
        return self._packed

    def forward(self, occupancy: np.ndarray) -> np.ndarray:
        """Per-voxel occupancy probabilities, shape (2, d, d, d) float32."""
        from .infer import forward_field

        return forward_field(self.packed(), occupancy)


def _glorot_uniform(rng, cout, cin, k, dtype):
    fan = (cin + cout) * k**3
    limit = np.sqrt(6.0 / fan)
    return rng.uniform(-limit, limit, size=(cout, cin, k, k, k)).astype(dtype)


def _build(rows, seed, dtype=np.float32) -> VoxelDnn:
    rng = np.random.default_rng(seed)
    layers = []
    for mask, k, cin, cout, act, skip in rows:
        layers.append(
            Conv3dLayer(
                mask=mask,
                k=k,
                cin=cin,
                cout=cout,
                activation=act,
                skip=skip,
                weights=_glorot_uniform(rng, cout, cin, k, dtype),
                bias=np.zeros(cout, dtype=dtype),
            )
        )
    return VoxelDnn(layers)


def build_reference_model(seed: int = 0) -> VoxelDnn:
    """Full-size network: 7-cube A-masked stem, two bottleneck residual
    blocks with 5-cube B-masked cores, and a 1-cube head; 290,754 parameters.
    """
    rows = [
        ("A", 7, 1, 64, "relu", None),
        (None, 1, 64, 32, "relu", "save"),
        ("B", 5, 32, 32, "relu", None),
        (None, 1, 32, 64, "none", "add"),
        (None, 1, 64, 32, "relu", "save"),
        ("B", 5, 32, 32, "relu", None),
        (None, 1, 32, 64, "none", "add"),
        (None, 1, 64, 64, "relu", None),
        (None, 1, 64, 2, "none", None),
    ]
    return _build(rows, seed)


def build_tiny_model(seed: int = 0) -> VoxelDnn:
    """Scaled-down variant for tests and desk-scale training: 3-cube kernels,
    8 filters, one residual block (826 parameters).
    """
    rows = [
        ("A", 3, 1, 8, "relu", None),
        (None, 1, 8, 4, "relu", "save"),
        ("B", 3, 4, 4, "relu", None),
        (None, 1, 4, 8, "none", "add"),
        (None, 1, 8, 8, "relu", None),
        (None, 1, 8, 2, "none", None),
    ]
    return _build(rows, seed)
