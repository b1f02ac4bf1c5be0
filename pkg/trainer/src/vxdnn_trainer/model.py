"""Torch implementation of the masked-convolution occupancy network.

Causality masks are multiplied into the kernels on every forward pass, so
whatever the optimizer writes into masked positions, the effective (and
exported) weights there are exactly zero.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

# (skip, mask, k, cin, cout, activation) per layer; skip "save" stashes the
# layer input, "add" sums the stash into the layer output
REFERENCE_LAYOUT = (
    (None, "A", 7, 1, 64, "relu"),
    ("save", None, 1, 64, 32, "relu"),
    (None, "B", 5, 32, 32, "relu"),
    ("add", None, 1, 32, 64, "none"),
    ("save", None, 1, 64, 32, "relu"),
    (None, "B", 5, 32, 32, "relu"),
    ("add", None, 1, 32, 64, "none"),
    (None, None, 1, 64, 64, "relu"),
    (None, None, 1, 64, 2, "none"),
)


def causal_mask(k: int, kind: str) -> torch.Tensor:
    """Raster-order causality mask: zeros from the center on (type A) or
    just after the center (type B)."""
    keep = k**3 // 2 + (1 if kind == "B" else 0)
    mask = torch.zeros(k**3)
    mask[:keep] = 1.0
    return mask.reshape(k, k, k)


class MaskedConv3d(nn.Conv3d):
    def __init__(self, mask_kind, cin, cout, k):
        super().__init__(cin, cout, k, padding=k // 2)
        self.mask_kind = mask_kind
        if mask_kind is None:
            mask = torch.ones(k, k, k)
        else:
            mask = causal_mask(k, mask_kind)
        self.register_buffer("mask", mask.view(1, 1, k, k, k))

    def forward(self, x):
        return F.conv3d(
            x, self.weight * self.mask, self.bias,
            stride=1, padding=self.padding,
        )

    def effective_weight(self) -> np.ndarray:
        return (self.weight * self.mask).detach().cpu().numpy().astype(np.float32)


class OccupancyNet(nn.Module):
    """Layer stack per ``layout``; outputs 2-channel logits per voxel."""

    def __init__(self, layout=REFERENCE_LAYOUT):
        super().__init__()
        self.layout = tuple(layout)
        self.convs = nn.ModuleList(
            MaskedConv3d(mask, cin, cout, k) for _, mask, k, cin, cout, _ in self.layout
        )

    def forward(self, x):
        saved = None
        for (skip, _, _, _, _, act), conv in zip(self.layout, self.convs):
            if skip == "save":
                saved = x
            x = conv(x)
            if act == "relu":
                x = F.relu(x)
            if skip == "add":
                x = x + saved
        return x

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def probabilities(self, occupancy: np.ndarray) -> np.ndarray:
        """(d, d, d) binary cube -> (2, d, d, d) float32 softmax field."""
        with torch.no_grad():
            x = torch.from_numpy(occupancy.astype(np.float32))[None, None]
            logits = self.forward(x)[0]
            return torch.softmax(logits, dim=0).numpy().astype(np.float32)


TINY_LAYOUT = (
    (None, "A", 3, 1, 8, "relu"),
    ("save", None, 1, 8, 4, "relu"),
    (None, "B", 3, 4, 4, "relu"),
    ("add", None, 1, 4, 8, "none"),
    (None, None, 1, 8, 8, "relu"),
    (None, None, 1, 8, 2, "none"),
)
