"""Weight-file serialization ("VXDN" format).

Layout, all integers little-endian:

    magic   4 bytes  b"VXDN"
    version 1 byte   (currently 1)
    layers  1 byte
    per layer:
        skip tag   u8   0 plain / 1 residual-save / 2 residual-add
        mask tag   u8   0 none / 1 type A / 2 type B
        k          u8
        cin        u16
        cout       u16
        activation u8   0 none / 1 relu
        weights    float32[cout*cin*k^3]  in (out, in, raster-k^3) order
        biases     float32[cout]
    checksum 8 bytes  first 8 bytes of SHA-256 over everything above

Masked kernel taps are stored as zeros, so any compliant producer yields a
file whose weights already satisfy the causality masks.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from ..errors import FormatError
from .model import Conv3dLayer, VoxelDnn

MAGIC = b"VXDN"
VERSION = 1

_SKIP_BY_TAG = {0: None, 1: "save", 2: "add"}
_MASK_BY_TAG = {0: None, 1: "A", 2: "B"}
_ACT_BY_TAG = {0: "none", 1: "relu"}


def checksum(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()[:8]


def model_to_bytes(model: VoxelDnn) -> bytes:
    parts = [MAGIC, struct.pack("<BB", VERSION, len(model.layers))]
    for layer in model.layers:
        parts.append(
            struct.pack(
                "<BBBHHB",
                layer.skip_tag,
                layer.mask_tag,
                layer.k,
                layer.cin,
                layer.cout,
                layer.act_tag,
            )
        )
        w = np.ascontiguousarray(layer.effective_weights(), dtype="<f4")
        b = np.ascontiguousarray(layer.bias, dtype="<f4")
        parts.append(w.tobytes())
        parts.append(b.tobytes())
    payload = b"".join(parts)
    return payload + checksum(payload)


def model_checksum(model: VoxelDnn) -> bytes:
    """Checksum of the model's canonical serialization (as stored in files
    and in container headers)."""
    return model_to_bytes(model)[-8:]


def write_model(model: VoxelDnn, dest) -> None:
    data = model_to_bytes(model)
    if isinstance(dest, (str, bytes)):
        with open(dest, "wb") as fh:
            fh.write(data)
    else:
        dest.write(data)


def read_model(source) -> VoxelDnn:
    """Parse and checksum-verify a VXDN byte stream, path, or file object."""
    if isinstance(source, str):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()

    if len(data) < 14:
        raise FormatError(f"weight file too short ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise FormatError(f"bad weight-file magic {data[:4]!r}")
    stored = data[-8:]
    expect = checksum(data[:-8])
    if stored != expect:
        raise FormatError(
            f"weight-file checksum mismatch: stored {stored.hex()}, "
            f"computed {expect.hex()}"
        )
    version, n_layers = struct.unpack_from("<BB", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported weight-file version {version}")
    pos = 6
    end = len(data) - 8
    layers = []
    for i in range(n_layers):
        if pos + 8 > end:
            raise FormatError(f"truncated layer header for layer {i}")
        skip_tag, mask_tag, k, cin, cout, act_tag = struct.unpack_from("<BBBHHB", data, pos)
        pos += 8
        for tag, table, what in (
            (skip_tag, _SKIP_BY_TAG, "skip"),
            (mask_tag, _MASK_BY_TAG, "mask"),
            (act_tag, _ACT_BY_TAG, "activation"),
        ):
            if tag not in table:
                raise FormatError(f"layer {i}: unknown {what} tag {tag}")
        n_w = cout * cin * k**3
        n_bytes = 4 * (n_w + cout)
        if pos + n_bytes > end:
            raise FormatError(f"truncated weights for layer {i}")
        w = np.frombuffer(data, dtype="<f4", count=n_w, offset=pos).reshape(
            cout, cin, k, k, k
        )
        pos += 4 * n_w
        b = np.frombuffer(data, dtype="<f4", count=cout, offset=pos)
        pos += 4 * cout
        layers.append(
            Conv3dLayer(
                mask=_MASK_BY_TAG[mask_tag],
                k=k,
                cin=cin,
                cout=cout,
                activation=_ACT_BY_TAG[act_tag],
                skip=_SKIP_BY_TAG[skip_tag],
                weights=w.astype(np.float32),
                bias=b.astype(np.float32),
            )
        )
    if pos != end:
        raise FormatError(f"{end - pos} unexpected trailing bytes before checksum")
    return VoxelDnn(layers)
