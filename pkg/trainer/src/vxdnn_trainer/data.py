"""Dataset assembly: PLY directories -> occupied binary training cubes."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np


class DatasetError(Exception):
    pass


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_ply_points(path) -> np.ndarray:
    """Minimal PLY vertex reader (ascii / binary little-endian, x/y/z)."""
    data = Path(path).read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise DatasetError(f"{path}: not a PLY file")
    body = data.find(b"\n", end) + 1
    fmt = None
    elements = []
    for raw in data[:end].split(b"\n"):
        tok = raw.decode("ascii", "replace").split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property" and elements:
            if tok[1] == "list":
                elements[-1][2].append((tok[-1], "list"))
            else:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise DatasetError(f"{path}: unsupported format {fmt!r}")

    if fmt == "ascii":
        lines = [l for l in data[body:].split(b"\n") if l.strip()]
        li = 0
        for name, count, props in elements:
            if name != "vertex":
                li += count
                continue
            names = [p for p, _ in props]
            ix, iy, iz = (names.index(a) for a in ("x", "y", "z"))
            if li + count > len(lines):
                raise DatasetError(f"{path}: truncated vertex data")
            rows = [lines[li + r].split() for r in range(count)]
            return np.array(
                [[float(r[ix]), float(r[iy]), float(r[iz])] for r in rows]
            )
    else:
        pos = body
        for name, count, props in elements:
            if any(t == "list" for _, t in props):
                raise DatasetError(f"{path}: list properties unsupported")
            dt = np.dtype([(p, "<" + t) for p, t in props])
            if name != "vertex":
                pos += dt.itemsize * count
                continue
            if pos + dt.itemsize * count > len(data):
                raise DatasetError(f"{path}: truncated vertex data")
            rec = np.frombuffer(data, dtype=dt, count=count, offset=pos)
            return np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    raise DatasetError(f"{path}: no vertex element")


def cloud_to_blocks(points: np.ndarray, block_side: int) -> list[np.ndarray]:
    """Quantize a cloud and cut it into its occupied cubes of the given side."""
    vox = np.unique(np.floor(points).astype(np.int64), axis=0)
    if (vox < 0).any():
        raise DatasetError("negative coordinates after quantization")
    cells = vox // block_side
    local = vox - cells * block_side
    keys = (cells[:, 0] << 42) | (cells[:, 1] << 21) | cells[:, 2]
    order = np.argsort(keys, kind="stable")
    keys, local = keys[order], local[order]
    splits = np.flatnonzero(np.diff(keys)) + 1
    blocks = []
    for chunk in np.split(local, splits):
        occ = np.zeros((block_side,) * 3, dtype=np.uint8)
        occ[chunk[:, 0], chunk[:, 1], chunk[:, 2]] = 1
        blocks.append(occ)
    return blocks


def list_ply_files(dirs) -> list[str]:
    files = []
    for d in dirs:
        if not os.path.isdir(d):
            raise DatasetError(f"not a directory: {d}")
        files.extend(
            str(p) for p in sorted(Path(d).rglob("*.ply"))
        )
    if not files:
        raise DatasetError(f"no .ply files under {list(dirs)}")
    return files


def build_dataset(dirs, block_side: int = 64, seed: int = 0,
                  test_fraction: float = 0.1):
    """Collect every occupied cube from every PLY under ``dirs``.

    Returns (train_blocks, test_blocks); the shuffle and split are
    deterministic for a given seed.
    """
    blocks = []
    for path in list_ply_files(dirs):
        blocks.extend(cloud_to_blocks(read_ply_points(path), block_side))
    if not blocks:
        raise DatasetError("dataset is empty after block extraction")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(blocks))
    n_test = int(round(len(blocks) * test_fraction))
    test = [blocks[i] for i in order[:n_test]]
    train = [blocks[i] for i in order[n_test:]]
    return train, test
