"""Training loop and weight export."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .data import build_dataset
from .export import write_weights
from .model import REFERENCE_LAYOUT, OccupancyNet

LOG2 = math.log(2.0)


@dataclass
class TrainingConfig:
    data_dirs: list = field(default_factory=list)
    block_side: int = 64
    batch_size: int = 8
    epochs: int = 50
    learning_rate: float = 0.001
    seed: int = 0
    test_fraction: float = 0.1
    export_path: str = "model.vxdn"


def train_model(blocks, config: TrainingConfig, layout=REFERENCE_LAYOUT):
    """Adam training on binary cubes; returns (net, per-epoch mean bits/block)."""
    torch.manual_seed(config.seed)
    net = OccupancyNet(layout)
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    data = torch.from_numpy(np.stack(blocks).astype(np.float32))
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(len(blocks))
        epoch_bits = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = data[idx]
            logits = net(batch[:, None])
            target = batch.long()
            loss = F.cross_entropy(logits, target, reduction="sum") / len(idx)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_bits += float(loss.detach()) / LOG2 * len(idx)
        history.append(epoch_bits / len(blocks))
    return net, history


def train_and_export(config: TrainingConfig, blocks=None):
    """Assemble the dataset (unless given), train, and write VXDN weights.

    Returns (net, history, test_blocks).
    """
    if blocks is None:
        train_blocks, test_blocks = build_dataset(
            config.data_dirs,
            block_side=config.block_side,
            seed=config.seed,
            test_fraction=config.test_fraction,
        )
    else:
        train_blocks, test_blocks = list(blocks), []
    net, history = train_model(train_blocks, config)
    write_weights(net, config.export_path)
    return net, history, test_blocks
