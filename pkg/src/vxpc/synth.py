"""Synthetic point clouds and training blocks for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .errors import VxpcError

SHAPES = ("sphere", "plane", "random")


def synth_cloud(shape: str, depth: int, points: int, seed: int = 0) -> np.ndarray:
    """Generate ``points`` float coordinates (pre-deduplication) on a 2**depth grid.

    sphere: jittered spherical shell around the grid center;
    plane:  axis-aligned slab exactly two voxels thick after flooring;
    random: uniform over the whole grid.
    """
    if shape not in SHAPES:
        raise VxpcError(f"unknown shape {shape!r}; choose from {SHAPES}")
    rng = np.random.default_rng(seed)
    size = float(1 << depth)
    if shape == "sphere":
        dirs = rng.normal(size=(points, 3))
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
        radius = 0.4 * size * (1.0 + 0.02 * rng.normal(size=(points, 1)))
        pts = size / 2 + radius * dirs
    elif shape == "plane":
        z0 = size / 2
        pts = np.empty((points, 3))
        pts[:, 0] = rng.uniform(0, size, points)
        pts[:, 1] = rng.uniform(0, size, points)
        pts[:, 2] = z0 + rng.uniform(0.0, 2.0, points)  # floors to {z0, z0+1}
    else:
        pts = rng.uniform(0, size, (points, 3))
    return np.clip(pts, 0.0, np.nextafter(size, 0.0))


def synth_blocks(count: int, side: int = 8, seed: int = 0) -> list[np.ndarray]:
    """Structured binary cubes for small-scale training.

    Mix of random half-spaces and solid balls, so an autoregressive model
    has geometry to learn; occupancy is far from i.i.d. uniform.
    """
    rng = np.random.default_rng(seed)
    grid = np.stack(
        np.meshgrid(*(np.arange(side),) * 3, indexing="ij"), axis=-1
    ).astype(np.float64)
    blocks = []
    for _ in range(count):
        if rng.random() < 0.5:
            normal = rng.normal(size=3)
            normal /= np.linalg.norm(normal)
            offset = rng.uniform(-0.25, 0.25) * side
            occ = ((grid - side / 2) @ normal <= offset).astype(np.uint8)
        else:
            center = rng.uniform(side * 0.25, side * 0.75, 3)
            radius = rng.uniform(side * 0.2, side * 0.45)
            occ = ((((grid - center) ** 2).sum(axis=-1)) <= radius**2).astype(np.uint8)
        if occ.any():
            blocks.append(np.ascontiguousarray(occ, dtype=np.uint8))
    return blocks
