"""VXDN weight-file writer/reader.

The format is the codec's normative weight interchange: magic "VXDN",
version, layer count, then per layer a 6-field header (skip/mask/kernel/
channels/activation tags) followed by float32 little-endian weights in
(out, in, raster-k^3) order and biases, closed by the first 8 bytes of the
SHA-256 of everything preceding.  Masked kernel positions are written as
zeros.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np
import torch

from .model import OccupancyNet

MAGIC = b"VXDN"
VERSION = 1

_SKIP_TAGS = {None: 0, "save": 1, "add": 2}
_MASK_TAGS = {None: 0, "A": 1, "B": 2}
_ACT_TAGS = {"none": 0, "relu": 1}
_SKIP_BY_TAG = {v: k for k, v in _SKIP_TAGS.items()}
_MASK_BY_TAG = {v: k for k, v in _MASK_TAGS.items()}
_ACT_BY_TAG = {v: k for k, v in _ACT_TAGS.items()}


class ExportError(Exception):
    pass


def checksum8(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()[:8]


def model_to_bytes(net: OccupancyNet) -> bytes:
    parts = [MAGIC, struct.pack("<BB", VERSION, len(net.convs))]
    for (skip, mask, k, cin, cout, act), conv in zip(net.layout, net.convs):
        parts.append(
            struct.pack(
                "<BBBHHB",
                _SKIP_TAGS[skip], _MASK_TAGS[mask], k, cin, cout, _ACT_TAGS[act],
            )
        )
        w = np.ascontiguousarray(conv.effective_weight(), dtype="<f4")
        b = conv.bias.detach().cpu().numpy().astype("<f4")
        parts.append(w.tobytes())
        parts.append(b.tobytes())
    payload = b"".join(parts)
    return payload + checksum8(payload)


def write_weights(net: OccupancyNet, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(net))


def read_weights(path_or_bytes) -> OccupancyNet:
    """Parse a VXDN file back into a torch model (checksum-verified)."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            data = fh.read()
    if data[:4] != MAGIC:
        raise ExportError(f"bad magic {data[:4]!r}")
    if checksum8(data[:-8]) != data[-8:]:
        raise ExportError("checksum mismatch")
    version, n_layers = struct.unpack_from("<BB", data, 4)
    if version != VERSION:
        raise ExportError(f"unsupported version {version}")
    pos = 6
    layout = []
    tensors = []
    for _ in range(n_layers):
        skip_t, mask_t, k, cin, cout, act_t = struct.unpack_from("<BBBHHB", data, pos)
        pos += 8
        n_w = cout * cin * k**3
        w = np.frombuffer(data, "<f4", n_w, pos).reshape(cout, cin, k, k, k)
        pos += 4 * n_w
        b = np.frombuffer(data, "<f4", cout, pos)
        pos += 4 * cout
        layout.append(
            (_SKIP_BY_TAG[skip_t], _MASK_BY_TAG[mask_t], k, cin, cout, _ACT_BY_TAG[act_t])
        )
        tensors.append((w.copy(), b.copy()))
    net = OccupancyNet(layout)
    with torch.no_grad():
        for conv, (w, b) in zip(net.convs, tensors):
            conv.weight.copy_(torch.from_numpy(w))
            conv.bias.copy_(torch.from_numpy(b))
    return net
