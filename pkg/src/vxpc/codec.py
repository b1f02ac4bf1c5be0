"""Encoder/decoder orchestration: occupancy models, rate-optimized block
partitioning, and the container format.

A cloud is voxelized, split into occupied 64-cubes located by the
high-level octree, and each 64-cube is coded as one arithmetic codeword.
Within a cube, a recursive partitioner decides, bottom-up and with real
trial encodings, whether each block is cheaper coded whole or split into
its eight children; the decisions are signaled as 2-bit preorder flags
(0 empty child, 1 single block, 2 split).  The cost of an alternative is
its measured payload bits plus two bits per flag, and ties go to the
unsplit block.

Container layout (integers little-endian, lengths 32-bit):

    magic    4 bytes  b"VXPC"
    version  u8
    depth    u8       grid bit depth n
    maxLv    u8       deepest partition level (1..5; side 64 >> (maxLv-1))
    model id u8       0 uniform / 1 adaptive / 2 voxeldnn
    model checksum 8 bytes (zeros unless voxeldnn)
    octree   u32 length + bytes (see vxpc.octree)
    per occupied 64-cube, in octree (Morton) order:
        partition flags, 2-bit packed MSB-first, zero-padded to a byte
        u32 codeword length + codeword

The flag run needs no length field: its grammar is self-delimiting.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .entropy import RangeDecoder, RangeEncoder, quantize_p1
from .errors import FormatError, GeometryError, VxpcError
from .geometry import BLOCK_SIDE, voxelize, extract_blocks
from .neural import VoxelDnn, model_checksum, read_model
from .neural.infer import decode_block as _neural_decode, forward_field
from .octree import build_octree, parse_octree, serialize_octree

MAGIC = b"VXPC"
VERSION = 1
HEADER_LEN = 16

MODEL_UNIFORM, MODEL_ADAPTIVE, MODEL_VOXELDNN = 0, 1, 2
MODEL_NAMES = {MODEL_UNIFORM: "uniform", MODEL_ADAPTIVE: "adaptive", MODEL_VOXELDNN: "voxeldnn"}

FLAG_EMPTY, FLAG_SINGLE, FLAG_SPLIT = 0, 1, 2
MIN_PARTITION_SIDE = 4
MAX_LEVEL_LIMIT = 5

_ZERO_CHECKSUM = bytes(8)


class UniformModel:
    """P(occupied) = 1/2 everywhere."""

    model_id = MODEL_UNIFORM
    checksum8 = _ZERO_CHECKSUM

    def reset_region(self):
        pass

    def snapshot(self):
        return None

    def restore(self, snap):
        pass

    def prepare(self, occ):
        return None

    def encode_block(self, enc, occ, prepared=None):
        enc.encode_bits_uniform(occ.ravel())

    def decode_block(self, dec, d):
        return dec.decode_bits_uniform(d**3).reshape(d, d, d)


class AdaptiveModel:
    """Laplace-smoothed running estimate (n1+1)/(n0+n1+2).

    Counts accumulate over every voxel coded so far within the current
    64-cube, across its leaves in coding order, and reset per cube.  The
    decoder mirrors the updates exactly.
    """

    model_id = MODEL_ADAPTIVE
    checksum8 = _ZERO_CHECKSUM

    def __init__(self):
        self.counts = np.zeros(2, dtype=np.int64)

    def reset_region(self):
        self.counts[:] = 0

    def snapshot(self):
        return self.counts.copy()

    def restore(self, snap):
        self.counts[:] = snap

    def prepare(self, occ):
        return None

    def encode_block(self, enc, occ, prepared=None):
        enc.encode_bits_adaptive(occ.ravel(), self.counts)

    def decode_block(self, dec, d):
        return dec.decode_bits_adaptive(d**3, self.counts).reshape(d, d, d)


class NeuralModel:
    """Autoregressive network probabilities, clamped and 16-bit quantized.

    Encoding uses a single whole-block forward pass; by the engine's
    causality guarantee this yields bit-identical probabilities to the
    decoder's sequential voxel-by-voxel evaluation.
    """

    model_id = MODEL_VOXELDNN

    def __init__(self, net: VoxelDnn):
        if net.dtype != np.float32:
            net = net.astype(np.float32)
        self.net = net
        self.checksum8 = model_checksum(net)

    def reset_region(self):
        pass

    def snapshot(self):
        return None

    def restore(self, snap):
        pass

    def prepare(self, occ):
        return quantize_p1(forward_field(self.net.packed(), occ)[1].ravel())

    def encode_block(self, enc, occ, prepared=None):
        qs = prepared if prepared is not None else self.prepare(occ)
        enc.encode_bits(occ.ravel(), qs)

    def decode_block(self, dec, d):
        return _neural_decode(self.net.packed(), d, dec)


def make_model(name: str, net: VoxelDnn | None = None):
    if name == "uniform":
        return UniformModel()
    if name == "adaptive":
        return AdaptiveModel()
    if name == "voxeldnn":
        if net is None:
            raise VxpcError("voxeldnn model requires network weights")
        return NeuralModel(net)
    raise VxpcError(f"unknown model {name!r}")


# ---------------------------------------------------------------------------
# single-block coding
# ---------------------------------------------------------------------------

def encode_single_block(coder: RangeEncoder, occ: np.ndarray, model, prepared=None) -> None:
    """Code all d**3 occupancy bits of one block in raster order."""
    model.encode_block(coder, np.ascontiguousarray(occ, dtype=np.uint8), prepared)


def decode_single_block(coder: RangeDecoder, d: int, model) -> np.ndarray:
    """Exact mirror of :func:`encode_single_block`."""
    return np.ascontiguousarray(model.decode_block(coder, d), dtype=np.uint8)


def single_block_cost_bits(occ: np.ndarray, model, prepared=None) -> int:
    """Payload bits of coding the block whole, measured on a throwaway coder.

    Advances adaptive model state exactly as a real encoding would.
    """
    enc = RangeEncoder(capacity=3 * occ.size + 64)
    encode_single_block(enc, occ, model, prepared)
    return enc.bits_emitted


# ---------------------------------------------------------------------------
# rate-optimized partitioning
# ---------------------------------------------------------------------------

def _children(occ: np.ndarray):
    """The eight half-side children in raster order of their origins."""
    h = occ.shape[0] // 2
    for cx in range(2):
        for cy in range(2):
            for cz in range(2):
                yield (cx * h, cy * h, cz * h), np.ascontiguousarray(
                    occ[cx * h : (cx + 1) * h, cy * h : (cy + 1) * h, cz * h : (cz + 1) * h]
                )


def _partition(occ, cur_lv, max_lv, model):
    """Recursive two-way choice; returns (flags, leaves, payload_bits).

    ``leaves`` holds ``(occupancy, prepared)`` in preorder; the model's
    adaptive state is left as if the chosen alternative had been encoded.
    """
    snap0 = model.snapshot()
    prepared = model.prepare(occ)
    bits_single = single_block_cost_bits(occ, model, prepared)
    snap_single = model.snapshot()
    if cur_lv >= max_lv or occ.shape[0] <= MIN_PARTITION_SIDE:
        return [FLAG_SINGLE], [(occ, prepared)], bits_single

    model.restore(snap0)
    flags = [FLAG_SPLIT]
    leaves = []
    bits_split = 0
    for _, child in _children(occ):
        if not child.any():
            flags.append(FLAG_EMPTY)
            continue
        child_flags, child_leaves, child_bits = _partition(child, cur_lv + 1, max_lv, model)
        flags.extend(child_flags)
        leaves.extend(child_leaves)
        bits_split += child_bits

    if bits_split + 2 * len(flags) >= bits_single + 2:
        model.restore(snap_single)
        return [FLAG_SINGLE], [(occ, prepared)], bits_single
    return flags, leaves, bits_split


def partition_encode(occ: np.ndarray, cur_lv: int, max_lv: int, model):
    """Choose the cheaper of single-block coding and recursive splitting.

    Returns (flags, payload_bits) where the cost of the choice is
    ``payload_bits + 2 * len(flags)``.
    """
    occ = np.ascontiguousarray(occ, dtype=np.uint8)
    if not occ.any():
        raise VxpcError("cannot partition an empty block")
    if cur_lv < 1:
        raise VxpcError(f"current level must be >= 1, got {cur_lv}")
    if not 1 <= max_lv <= MAX_LEVEL_LIMIT:
        raise VxpcError(f"max level must be in [1, {MAX_LEVEL_LIMIT}], got {max_lv}")
    flags, _, payload_bits = _partition(occ, cur_lv, max_lv, model)
    return flags, payload_bits


def pack_flags(flags) -> bytes:
    """2-bit pack in MSB-first order, zero-padded to a whole byte."""
    out = bytearray((len(flags) + 3) // 4)
    for i, f in enumerate(flags):
        out[i >> 2] |= f << (6 - 2 * (i & 3))
    return bytes(out)


class _FlagReader:
    def __init__(self, data, byte_offset):
        self._data = data
        self._start = byte_offset
        self.count = 0

    def read2(self) -> int:
        i = self.count
        pos = self._start + (i >> 2)
        if pos >= len(self._data):
            raise FormatError("truncated partition-flag stream")
        self.count += 1
        return (self._data[pos] >> (6 - 2 * (i & 3))) & 3

    def end_offset(self) -> int:
        return self._start + (self.count + 3) // 4


def _parse_flag_node(reader, origin, side, cur_lv, max_lv, leaves, allow_empty):
    f = reader.read2()
    if f == FLAG_EMPTY:
        if not allow_empty:
            raise FormatError("empty flag at a block root")
        return
    if f == FLAG_SINGLE:
        leaves.append((origin, side))
        return
    if f == FLAG_SPLIT:
        if side <= MIN_PARTITION_SIDE:
            raise FormatError(f"split flag at minimum block side {MIN_PARTITION_SIDE}")
        if cur_lv >= max_lv:
            raise FormatError(f"split flag below max partition level {max_lv}")
        h = side // 2
        for cx in range(2):
            for cy in range(2):
                for cz in range(2):
                    child_origin = (origin[0] + cx * h, origin[1] + cy * h, origin[2] + cz * h)
                    _parse_flag_node(reader, child_origin, h, cur_lv + 1, max_lv, leaves, True)
        return
    raise FormatError("invalid partition flag 3")


def parse_flags(data, byte_offset, max_lv):
    """Walk the flag grammar; returns (leaves, flag_count, next_byte_offset)."""
    reader = _FlagReader(data, byte_offset)
    leaves = []
    _parse_flag_node(reader, (0, 0, 0), BLOCK_SIDE, 1, max_lv, leaves, allow_empty=False)
    return leaves, reader.count, reader.end_offset()


# ---------------------------------------------------------------------------
# region (64-cube) coding
# ---------------------------------------------------------------------------

def encode_region(occ64: np.ndarray, max_lv: int, model):
    """Partition and code one 64-cube into (flag_bytes, codeword, stats)."""
    model.reset_region()
    flags, leaves, _ = _partition(occ64, 1, max_lv, model)
    model.reset_region()
    enc = RangeEncoder(capacity=3 * occ64.size + 64)
    for leaf_occ, prepared in leaves:
        encode_single_block(enc, leaf_occ, model, prepared)
    payload_bits = enc.bits_emitted
    codeword = enc.flush()
    return pack_flags(flags), codeword, len(flags), payload_bits


def decode_region(data, offset: int, max_lv: int, model):
    """Decode one 64-cube starting at ``offset``; returns (occ64, next_offset)."""
    leaves, _, offset = parse_flags(data, offset, max_lv)
    if offset + 4 > len(data):
        raise FormatError("truncated codeword length")
    (cw_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if offset + cw_len > len(data):
        raise FormatError(f"truncated codeword: need {cw_len} bytes")
    dec = RangeDecoder(data[offset : offset + cw_len])
    offset += cw_len
    model.reset_region()
    occ64 = np.zeros((BLOCK_SIDE, BLOCK_SIDE, BLOCK_SIDE), dtype=np.uint8)
    for (ox, oy, oz), side in leaves:
        occ64[ox : ox + side, oy : oy + side, oz : oz + side] = model.decode_block(dec, side)
    return occ64, offset


# ---------------------------------------------------------------------------
# whole-cloud container
# ---------------------------------------------------------------------------

@dataclass
class BlockReport:
    origin: tuple[int, int, int]
    voxels: int
    flag_count: int
    flag_bits: int      # packed flag run, padding included
    payload_bits: int   # flushed codeword, length prefix excluded
    coded_bits: int     # pre-flush payload measure


@dataclass
class RunReport:
    depth: int
    max_level: int
    model_id: int
    voxels: int
    total_bits: int
    header_bits: int
    octree_bits: int
    blocks: list[BlockReport] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def model_name(self) -> str:
        return MODEL_NAMES[self.model_id]

    @property
    def bpov(self) -> float:
        return bpov(self.total_bits, self.voxels)


def bpov(total_bits: int, voxel_count: int) -> float:
    """Bits per occupied voxel, the headline rate metric."""
    if voxel_count <= 0:
        raise VxpcError("bpov undefined for zero occupied voxels")
    return total_bits / voxel_count


def _clone_model(model):
    """Independent per-region model instance for parallel encoding.

    Neural clones share the (read-only) network and its packed cache.
    """
    if isinstance(model, UniformModel):
        return UniformModel()
    if isinstance(model, AdaptiveModel):
        return AdaptiveModel()
    clone = NeuralModel.__new__(NeuralModel)
    clone.net = model.net
    clone.checksum8 = model.checksum8
    return clone


def encode_point_cloud(points, depth: int, max_lv: int, model, threads: int = 1):
    """Full pipeline: voxelize, partition, and serialize to container bytes.

    Returns (container bytes, RunReport).  ``threads`` > 1 encodes 64-cubes
    concurrently; the output bytes do not depend on it.
    """
    if not 1 <= max_lv <= MAX_LEVEL_LIMIT:
        raise VxpcError(f"max level must be in [1, {MAX_LEVEL_LIMIT}], got {max_lv}")
    t0 = time.perf_counter()
    vox = voxelize(points, depth)
    if len(vox) == 0:
        raise GeometryError("cannot encode an empty point cloud")
    blocks = extract_blocks(vox, depth)
    tree = build_octree([loc for loc, _ in blocks], depth)
    octree_bytes = serialize_octree(tree)
    order = parse_octree(octree_bytes, depth)  # canonical container order
    by_origin = {loc.origin: occ for loc, occ in blocks}

    out = bytearray()
    out += MAGIC
    out += struct.pack("<BBBB", VERSION, depth, max_lv, model.model_id)
    out += model.checksum8
    out += struct.pack("<I", len(octree_bytes))
    out += octree_bytes

    if threads > 1 and len(order) > 1:
        from concurrent.futures import ThreadPoolExecutor

        def job(loc):
            return encode_region(by_origin[loc.origin], max_lv, _clone_model(model))

        with ThreadPoolExecutor(max_workers=threads) as pool:
            encoded = list(pool.map(job, order))
    else:
        encoded = [encode_region(by_origin[loc.origin], max_lv, model) for loc in order]

    reports = []
    for loc, (flag_bytes, codeword, n_flags, coded_bits) in zip(order, encoded):
        occ = by_origin[loc.origin]
        out += flag_bytes
        out += struct.pack("<I", len(codeword))
        out += codeword
        reports.append(
            BlockReport(
                origin=loc.origin,
                voxels=int(occ.sum()),
                flag_count=n_flags,
                flag_bits=8 * len(flag_bytes),
                payload_bits=8 * len(codeword),
                coded_bits=coded_bits,
            )
        )
    report = RunReport(
        depth=depth,
        max_level=max_lv,
        model_id=model.model_id,
        voxels=len(vox),
        total_bits=8 * len(out),
        header_bits=8 * HEADER_LEN,
        octree_bits=8 * (4 + len(octree_bytes)),
        blocks=reports,
        wall_time=time.perf_counter() - t0,
    )
    return bytes(out), report


def read_header(data: bytes):
    if len(data) < HEADER_LEN + 4:
        raise FormatError(f"container too short ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise FormatError(f"bad container magic {data[:4]!r}")
    version, depth, max_lv, model_id = struct.unpack_from("<BBBB", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    if model_id not in MODEL_NAMES:
        raise FormatError(f"unknown model id {model_id}")
    if not 1 <= max_lv <= MAX_LEVEL_LIMIT:
        raise FormatError(f"max level {max_lv} outside [1, {MAX_LEVEL_LIMIT}]")
    return version, depth, max_lv, model_id, data[8:16]


def decode_point_cloud(data: bytes, weights=None) -> np.ndarray:
    """Decode a container back to its duplicate-free voxel set.

    ``weights`` (path, bytes, or VoxelDnn) is required iff the container was
    coded with the neural model; its checksum must match the header's before
    any payload is touched.
    """
    _, depth, max_lv, model_id, stored_sum = read_header(data)
    if model_id == MODEL_VOXELDNN:
        if weights is None:
            raise VxpcError("container was coded with voxeldnn: weights required")
        net = weights if isinstance(weights, VoxelDnn) else read_model(weights)
        have = model_checksum(net if net.dtype == np.float32 else net.astype(np.float32))
        if have != stored_sum:
            raise FormatError(
                f"model checksum mismatch: container {stored_sum.hex()}, "
                f"weights {have.hex()}"
            )
        model = NeuralModel(net)
    elif model_id == MODEL_ADAPTIVE:
        model = AdaptiveModel()
    else:
        model = UniformModel()

    offset = HEADER_LEN
    (octree_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if offset + octree_len > len(data):
        raise FormatError("truncated octree run")
    origins = parse_octree(data[offset : offset + octree_len], depth)
    offset += octree_len

    parts = []
    for loc in origins:
        occ64, offset = decode_region(data, offset, max_lv, model)
        xs, ys, zs = np.nonzero(occ64)
        coords = np.stack([xs, ys, zs], axis=1).astype(np.int64)
        coords += np.asarray(loc.origin, dtype=np.int64)
        parts.append(coords)
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after last block")
    vox = np.concatenate(parts) if parts else np.empty((0, 3), dtype=np.int64)
    vox = np.unique(vox, axis=0)
    return vox.astype(np.int32)
