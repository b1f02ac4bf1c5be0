"""Point-cloud ingestion, voxelization, raster indexing, and block extraction.

Coordinates live on a ``2**n x 2**n x 2**n`` grid (n >= 6).  Every dense cube
of side ``d`` in this codebase is linearized in raster order with z fastest:

    index(x, y, z) = x*d*d + y*d + z

which is exactly the C-order flattening of a ``(d, d, d)`` numpy array.  All
other modules (masks, model, coder) rely on this single convention.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, PlyError

BLOCK_SIDE = 64
MIN_DEPTH = 6

VALID_BLOCK_SIDES = (4, 8, 16, 32, 64)


@dataclass(frozen=True)
class PointCloud:
    """Raw vertices as loaded from disk; may be float, pre-voxelization."""

    points: np.ndarray  # (N, 3)
    depth: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise GeometryError(f"points must be (N, 3), got {pts.shape}")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class BlockLocation:
    """Minimum corner of a cubic block, in grid units."""

    origin: tuple[int, int, int]
    side: int

    def __post_init__(self):
        if any(c % self.side for c in self.origin):
            raise GeometryError(
                f"block origin {self.origin} not aligned to side {self.side}"
            )


def raster_index(x: int, y: int, z: int, d: int) -> int:
    """Raster-scan index of voxel (x, y, z) in a cube of side d."""
    if not (0 <= x < d and 0 <= y < d and 0 <= z < d):
        raise GeometryError(f"coordinate ({x}, {y}, {z}) outside cube of side {d}")
    return x * d * d + y * d + z


def raster_coords(i: int, d: int) -> tuple[int, int, int]:
    """Inverse of :func:`raster_index`."""
    if not 0 <= i < d * d * d:
        raise GeometryError(f"raster index {i} outside cube of side {d}")
    x, rem = divmod(i, d * d)
    y, z = divmod(rem, d)
    return x, y, z


def voxelize(points, depth: int) -> np.ndarray:
    """Quantize points onto the 2**depth grid and drop duplicates.

    Float coordinates are floored.  Coordinates above the grid are clamped to
    the last cell; negative coordinates are rejected rather than wrapped.
    Returns a duplicate-free ``(M, 3)`` int32 array sorted in raster order of
    the full grid.
    """
    if depth < MIN_DEPTH:
        raise GeometryError(f"bit depth must be >= {MIN_DEPTH}, got {depth}")
    if isinstance(points, PointCloud):
        points = points.points
    pts = np.asarray(points)
    if pts.size == 0:
        return np.empty((0, 3), dtype=np.int32)
    vox = np.floor(pts).astype(np.int64)
    if (vox < 0).any():
        bad = vox[(vox < 0).any(axis=1)][0]
        raise GeometryError(f"negative coordinate after quantization: {tuple(bad)}")
    limit = (1 << depth) - 1
    np.minimum(vox, limit, out=vox)
    vox = np.unique(vox, axis=0)  # unique sorts lexicographically = raster order
    return vox.astype(np.int32)


def extract_blocks(voxels: np.ndarray, depth: int):
    """Group a voxel set into occupied 64-cubes.

    Returns ``[(BlockLocation, occupancy)]`` with occupancy a ``(64, 64, 64)``
    uint8 array, sorted by raster order of block origins.  Concatenating the
    blocks reproduces the input set exactly.
    """
    if depth < MIN_DEPTH:
        raise GeometryError(f"bit depth must be >= {MIN_DEPTH}, got {depth}")
    voxels = np.asarray(voxels, dtype=np.int64)
    if voxels.size == 0:
        return []
    if (voxels < 0).any() or (voxels >= (1 << depth)).any():
        raise GeometryError(f"voxel outside 2^{depth} grid")
    block_coords = voxels >> 6
    local = voxels & 63
    nside = 1 << (depth - 6)
    keys = (block_coords[:, 0] * nside + block_coords[:, 1]) * nside + block_coords[:, 2]
    order = np.argsort(keys, kind="stable")
    keys, local = keys[order], local[order]
    boundaries = np.flatnonzero(np.diff(keys)) + 1
    out = []
    for chunk_keys, chunk_local in zip(
        np.split(keys, boundaries), np.split(local, boundaries)
    ):
        key = int(chunk_keys[0])
        bz = key % nside
        bx, by = divmod(key // nside, nside)
        occ = np.zeros((BLOCK_SIDE, BLOCK_SIDE, BLOCK_SIDE), dtype=np.uint8)
        occ[chunk_local[:, 0], chunk_local[:, 1], chunk_local[:, 2]] = 1
        loc = BlockLocation((bx * 64, by * 64, bz * 64), BLOCK_SIDE)
        out.append((loc, occ))
    return out


def assemble_blocks(blocks) -> np.ndarray:
    """Inverse of :func:`extract_blocks`: merge blocks back into a voxel set."""
    parts = []
    for loc, occ in blocks:
        xs, ys, zs = np.nonzero(occ)
        coords = np.stack([xs, ys, zs], axis=1).astype(np.int64)
        coords += np.asarray(loc.origin, dtype=np.int64)
        parts.append(coords)
    if not parts:
        return np.empty((0, 3), dtype=np.int32)
    vox = np.unique(np.concatenate(parts), axis=0)
    return vox.astype(np.int32)


# ---------------------------------------------------------------------------
# PLY reader / writer (ASCII and binary little-endian)
# ---------------------------------------------------------------------------

_PLY_SCALARS = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_ply(source) -> PointCloud:
    """Read vertex x/y/z from a PLY file path, byte string, or binary stream.

    Supports ``ascii`` and ``binary_little_endian`` formats with float or
    integer coordinate properties.  Elements other than ``vertex`` are
    skipped.  Malformed input raises :class:`PlyError` with the byte offset
    of the fault.
    """
    if isinstance(source, str):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()

    header_end = data.find(b"end_header")
    if not data.startswith(b"ply") or header_end < 0:
        raise PlyError("not a PLY file: missing 'ply' magic or 'end_header'", 0)
    body_start = data.find(b"\n", header_end)
    if body_start < 0:
        raise PlyError("header not terminated by newline", header_end)
    body_start += 1

    fmt = None
    elements = []  # (name, count, [(prop_name, np_type or 'list')])
    offset = 0
    for raw in data[:header_end].split(b"\n"):
        line = raw.decode("ascii", errors="replace").strip()
        tokens = line.split()
        if not tokens or tokens[0] in ("ply", "comment", "obj_info"):
            offset += len(raw) + 1
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"unsupported PLY format line: {line!r}", offset)
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise PlyError(f"malformed element line: {line!r}", offset)
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise PlyError("property before any element", offset)
            if tokens[1] == "list":
                elements[-1][2].append((tokens[-1], "list"))
            else:
                if len(tokens) != 3 or tokens[1] not in _PLY_SCALARS:
                    raise PlyError(f"unsupported property: {line!r}", offset)
                elements[-1][2].append((tokens[2], _PLY_SCALARS[tokens[1]]))
        else:
            raise PlyError(f"unrecognized header line: {line!r}", offset)
        offset += len(raw) + 1
    if fmt is None:
        raise PlyError("missing 'format' line in header", 0)

    vertex_names = [name for name, _, _ in elements if name == "vertex"]
    if not vertex_names:
        raise PlyError("no 'vertex' element in header", 0)

    pos = body_start
    if fmt == "ascii":
        lines = data[body_start:].split(b"\n")
        while lines and not lines[-1].strip():
            lines.pop()
        li = 0
        for name, count, props in elements:
            if name != "vertex":
                li += count
                continue
            pnames = [p for p, _ in props]
            for axis in ("x", "y", "z"):
                if axis not in pnames:
                    raise PlyError(f"vertex element missing property {axis!r}", 0)
            ix, iy, iz = (pnames.index(a) for a in ("x", "y", "z"))
            pts = np.empty((count, 3), dtype=np.float64)
            for row in range(count):
                if li >= len(lines):
                    raise PlyError(
                        f"truncated body: expected {count} vertices, got {row}",
                        len(data),
                    )
                tokens = lines[li].split()
                li += 1
                if len(tokens) < len(props):
                    raise PlyError(
                        f"vertex line {row} has {len(tokens)} fields, "
                        f"expected {len(props)}",
                        pos,
                    )
                try:
                    pts[row] = (float(tokens[ix]), float(tokens[iy]), float(tokens[iz]))
                except ValueError as exc:
                    raise PlyError(f"bad vertex value on line {row}: {exc}", pos) from None
            return PointCloud(pts)
    else:
        for name, count, props in elements:
            if any(t == "list" for _, t in props):
                if name == "vertex":
                    raise PlyError("list property inside vertex element unsupported", pos)
                raise PlyError(
                    f"cannot skip element {name!r} with list property before vertex", pos
                )
            dt = np.dtype([(p, "<" + t) for p, t in props])
            nbytes = dt.itemsize * count
            if name != "vertex":
                pos += nbytes
                continue
            for axis in ("x", "y", "z"):
                if axis not in dt.names:
                    raise PlyError(f"vertex element missing property {axis!r}", 0)
            if pos + nbytes > len(data):
                have = max(0, (len(data) - pos) // dt.itemsize)
                raise PlyError(
                    f"truncated body: expected {count} vertices, got {have}",
                    len(data),
                )
            rec = np.frombuffer(data, dtype=dt, count=count, offset=pos)
            pts = np.stack(
                [rec["x"], rec["y"], rec["z"]], axis=1
            ).astype(np.float64)
            return PointCloud(pts)
    raise PlyError("no 'vertex' element found in body", pos)


def save_ply(points, dest, binary: bool = True) -> None:
    """Write (N, 3) coordinates as a PLY vertex cloud.

    Coordinates are stored as float32, which is exact for integer grids up
    to 2**24.  ``dest`` may be a path or a binary stream.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float32))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise GeometryError(f"points must be (N, 3), got {pts.shape}")
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(pts)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    ).encode("ascii")
    if binary:
        body = pts.astype("<f4").tobytes()
    else:
        body = "".join(
            f"{x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in pts
        ).encode("ascii")
    if isinstance(dest, (str, bytes)):
        with open(dest, "wb") as fh:
            fh.write(header + body)
    else:
        dest.write(header + body)


def ply_bytes(points, binary: bool = True) -> bytes:
    """Render :func:`save_ply` output to bytes."""
    buf = io.BytesIO()
    save_ply(points, buf, binary=binary)
    return buf.getvalue()
