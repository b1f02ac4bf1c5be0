"""High-level octree locating the occupied 64-cubes of an n-bit grid.

The tree spans depths ``n`` down to the 64-block level, i.e. ``n - 6``
levels.  Serialization is one byte per internal node in breadth-first
order; bit ``7 - k`` of a node's byte is set iff child ``k`` is non-empty,
with ``k = 4*x_bit + 2*y_bit + z_bit`` so that child enumeration agrees
with the raster convention of :mod:`vxpc.geometry`.  Breadth-first layout
makes the stream self-delimiting given ``n`` and needs no recursion to
parse.  Leaves therefore come out ordered by the interleaved-bit (Morton)
code of their origin; this is the canonical block order of the container
format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, GeometryError
from .geometry import MIN_DEPTH, BlockLocation


@dataclass(frozen=True)
class HighLevelOctree:
    """Occupancy tree over block-64 cells of a 2**depth grid."""

    depth: int
    level_bytes: tuple[bytes, ...]  # one entry per internal level, root first

    @property
    def num_levels(self) -> int:
        return self.depth - MIN_DEPTH

    def byte_count(self) -> int:
        return sum(len(b) for b in self.level_bytes)


def _morton_codes(block_coords: np.ndarray, levels: int) -> np.ndarray:
    """Interleave block coords into per-level 3-bit child indices, MSB first."""
    codes = np.zeros(len(block_coords), dtype=np.uint64)
    bx, by, bz = (block_coords[:, i].astype(np.uint64) for i in range(3))
    for level in range(levels):
        shift = np.uint64(levels - 1 - level)
        k = (
            ((bx >> shift) & np.uint64(1)) * np.uint64(4)
            + ((by >> shift) & np.uint64(1)) * np.uint64(2)
            + ((bz >> shift) & np.uint64(1))
        )
        codes = (codes << np.uint64(3)) | k
    return codes


def _morton_decode(codes: np.ndarray, levels: int) -> np.ndarray:
    coords = np.zeros((len(codes), 3), dtype=np.int64)
    for level in range(levels):
        shift = np.uint64(3 * (levels - 1 - level))
        k = (codes >> shift) & np.uint64(7)
        coords[:, 0] = (coords[:, 0] << 1) | ((k >> np.uint64(2)) & np.uint64(1)).astype(np.int64)
        coords[:, 1] = (coords[:, 1] << 1) | ((k >> np.uint64(1)) & np.uint64(1)).astype(np.int64)
        coords[:, 2] = (coords[:, 2] << 1) | (k & np.uint64(1)).astype(np.int64)
    return coords


def build_octree(origins, depth: int) -> HighLevelOctree:
    """Build the tree whose leaves are exactly the given block-64 origins."""
    if depth < MIN_DEPTH:
        raise GeometryError(f"bit depth must be >= {MIN_DEPTH}, got {depth}")
    coords = np.asarray(
        [loc.origin if isinstance(loc, BlockLocation) else loc for loc in origins],
        dtype=np.int64,
    ).reshape(-1, 3)
    if len(coords) == 0:
        raise GeometryError("octree needs at least one occupied block")
    if (coords % 64).any():
        raise GeometryError("block origins must be multiples of 64")
    if (coords < 0).any() or (coords >= (1 << depth)).any():
        raise GeometryError(f"block origin outside 2^{depth} grid")
    levels = depth - MIN_DEPTH
    if levels == 0:
        if len(coords) != 1 or coords.any():
            raise GeometryError("depth 6 grid holds exactly one block at the origin")
        return HighLevelOctree(depth, ())
    codes = np.unique(_morton_codes(coords >> 6, levels))
    level_bytes = []
    for level in range(levels):
        child_ids = np.unique(codes >> np.uint64(3 * (levels - 1 - level)))
        parents = child_ids >> np.uint64(3)
        bits = np.uint64(0x80) >> (child_ids & np.uint64(7))
        node_ids, inverse = np.unique(parents, return_inverse=True)
        masks = np.zeros(len(node_ids), dtype=np.uint64)
        np.bitwise_or.at(masks, inverse, bits)
        level_bytes.append(masks.astype(np.uint8).tobytes())
    return HighLevelOctree(depth, tuple(level_bytes))


def serialize_octree(tree: HighLevelOctree) -> bytes:
    return b"".join(tree.level_bytes)


def parse_octree(data: bytes, depth: int) -> list[BlockLocation]:
    """Decode block-64 origins from a breadth-first octree byte run.

    Origins come back in ascending Morton order.  Raises
    :class:`FormatError` on a zero internal byte, a truncated stream, or
    trailing bytes.
    """
    if depth < MIN_DEPTH:
        raise GeometryError(f"bit depth must be >= {MIN_DEPTH}, got {depth}")
    levels = depth - MIN_DEPTH
    if levels == 0:
        if data:
            raise FormatError(f"expected empty octree run at depth 6, got {len(data)} bytes")
        return [BlockLocation((0, 0, 0), 64)]
    pos = 0
    node_ids = np.zeros(1, dtype=np.uint64)  # current level, ascending
    for level in range(levels):
        count = len(node_ids)
        if pos + count > len(data):
            raise FormatError(
                f"truncated octree: level {level} needs {count} bytes, "
                f"{len(data) - pos} remain"
            )
        raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
        pos += count
        if (raw == 0).any():
            raise FormatError(f"empty internal octree node at level {level}")
        bits = np.unpackbits(raw).reshape(count, 8).astype(bool)
        parent_rep = np.repeat(node_ids, bits.sum(axis=1))
        child_k = np.tile(np.arange(8, dtype=np.uint64), count)[bits.ravel()]
        node_ids = (parent_rep << np.uint64(3)) | child_k
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after octree")
    coords = _morton_decode(node_ids, levels) * 64
    return [BlockLocation((int(x), int(y), int(z)), 64) for x, y, z in coords]
