"""Float32 inference kernels: whole-block forward and sequential decode.

Both paths compute every output with the identical scalar recipe:

    acc = bias; for taps in raster order (masked and out-of-bounds taps
    skipped): for input channels: acc += w * x        (all float32, no FMA)

so a whole-block forward pass and a voxel-by-voxel evaluation over a
partially known block produce bit-identical probabilities at every voxel
whose causal context is known.  The encoder exploits this: it runs one
forward pass over the finished block, while the decoder regenerates the
same probability sequence incrementally, caching only the activations that
later kernel taps will read (the raw input plus the input of every k>1
convolution).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ..entropy import _decode_bit
from ..errors import VxpcError
from .model import MASK_A, MASK_B, SKIP_ADD, SKIP_SAVE, VoxelDnn

# meta columns
_MASK, _K, _CIN, _COUT, _ACT, _SKIP, _WOFF, _BOFF, _OUT_SLOT, _IN_SLOT = range(10)

_F0 = np.float32(0.0)
_F_SCALE = np.float32(65536.0)


@njit(cache=True, parallel=True)
def _conv3d(x, w, b, mask_tag, act):
    cin, d = x.shape[0], x.shape[1]
    cout, k = w.shape[0], w.shape[2]
    r = k // 2
    ctr = (k * k * k) // 2
    out = np.empty((cout, d, d, d), dtype=np.float32)
    for px in prange(d):
        for py in range(d):
            for pz in range(d):
                for o in range(cout):
                    acc = b[o]
                    for tx in range(k):
                        ix = px + tx - r
                        if ix < 0 or ix >= d:
                            continue
                        for ty in range(k):
                            iy = py + ty - r
                            if iy < 0 or iy >= d:
                                continue
                            for tz in range(k):
                                t = (tx * k + ty) * k + tz
                                if mask_tag == 1 and t >= ctr:
                                    continue
                                if mask_tag == 2 and t > ctr:
                                    continue
                                iz = pz + tz - r
                                if iz < 0 or iz >= d:
                                    continue
                                for c in range(cin):
                                    acc += w[o, c, tx, ty, tz] * x[c, ix, iy, iz]
                    if act == 1 and acc < _F0:
                        acc = _F0
                    out[o, px, py, pz] = acc
    return out


@njit(cache=True)
def _softmax_pair(l0, l1):
    m = l0 if l0 >= l1 else l1
    e0 = np.exp(l0 - m)
    e1 = np.exp(l1 - m)
    s = e0 + e1
    return e0 / s, e1 / s


@njit(cache=True)
def _softmax_field(logits):
    d = logits.shape[1]
    probs = np.empty_like(logits)
    for px in range(d):
        for py in range(d):
            for pz in range(d):
                p0, p1 = _softmax_pair(logits[0, px, py, pz], logits[1, px, py, pz])
                probs[0, px, py, pz] = p0
                probs[1, px, py, pz] = p1
    return probs


@njit(cache=True)
def _predict_voxel(meta, wflat, bflat, slot_off, cache, d, px, py, pz, cur, nxt, saved):
    """Evaluate the layer stack at one voxel against the activation caches."""
    d3 = d * d * d
    p = (px * d + py) * d + pz
    cin0 = meta[0, _CIN]
    for c in range(cin0):
        cur[c] = cache[slot_off[0] + c * d3 + p]
    for j in range(meta.shape[0]):
        mask_tag = meta[j, _MASK]
        k = meta[j, _K]
        cin = meta[j, _CIN]
        cout = meta[j, _COUT]
        woff = meta[j, _WOFF]
        k3 = k * k * k
        ctr = k3 // 2
        r = k // 2
        if meta[j, _SKIP] == SKIP_SAVE:
            for c in range(cin):
                saved[c] = cur[c]
        if k == 1:
            for o in range(cout):
                acc = bflat[meta[j, _BOFF] + o]
                if mask_tag != 1:  # an A mask zeroes the lone center tap
                    base = woff + o * cin
                    for c in range(cin):
                        acc += wflat[base + c] * cur[c]
                if meta[j, _ACT] == 1 and acc < _F0:
                    acc = _F0
                nxt[o] = acc
        else:
            in_base = slot_off[meta[j, _IN_SLOT]]
            for o in range(cout):
                acc = bflat[meta[j, _BOFF] + o]
                for tx in range(k):
                    ix = px + tx - r
                    if ix < 0 or ix >= d:
                        continue
                    for ty in range(k):
                        iy = py + ty - r
                        if iy < 0 or iy >= d:
                            continue
                        for tz in range(k):
                            t = (tx * k + ty) * k + tz
                            if mask_tag == 1 and t >= ctr:
                                continue
                            if mask_tag == 2 and t > ctr:
                                continue
                            iz = pz + tz - r
                            if iz < 0 or iz >= d:
                                continue
                            src = (ix * d + iy) * d + iz
                            wbase = woff + (o * cin) * k3 + t
                            for c in range(cin):
                                acc += wflat[wbase + c * k3] * cache[in_base + c * d3 + src]
                if meta[j, _ACT] == 1 and acc < _F0:
                    acc = _F0
                nxt[o] = acc
        if meta[j, _SKIP] == SKIP_ADD:
            for o in range(cout):
                nxt[o] = nxt[o] + saved[o]
        out_slot = meta[j, _OUT_SLOT]
        if out_slot >= 0:
            base = slot_off[out_slot]
            for o in range(cout):
                cache[base + o * d3 + p] = nxt[o]
        for o in range(cout):
            cur[o] = nxt[o]
    return _softmax_pair(cur[0], cur[1])


@njit(cache=True)
def _quantize_scalar(p1):
    q = np.int64(p1 * _F_SCALE)
    if q < 1:
        q = np.int64(1)
    elif q > 65535:
        q = np.int64(65535)
    return q


@njit(cache=True)
def _sequential_probs(meta, wflat, bflat, slot_off, cache, d, cur, nxt, saved, occ, out_p1):
    for px in range(d):
        for py in range(d):
            for pz in range(d):
                _, p1 = _predict_voxel(
                    meta, wflat, bflat, slot_off, cache, d, px, py, pz, cur, nxt, saved
                )
                p = (px * d + py) * d + pz
                out_p1[p] = p1
                cache[p] = np.float32(occ[px, py, pz])


@njit(cache=True)
def _decode_block(meta, wflat, bflat, slot_off, cache, d, cur, nxt, saved, dst, data, occ_out):
    for px in range(d):
        for py in range(d):
            for pz in range(d):
                _, p1 = _predict_voxel(
                    meta, wflat, bflat, slot_off, cache, d, px, py, pz, cur, nxt, saved
                )
                bit = _decode_bit(dst, data, _quantize_scalar(p1))
                occ_out[px, py, pz] = bit
                cache[(px * d + py) * d + pz] = np.float32(bit)


class PackedModel:
    """Flat float32 arrays plus layer metadata consumed by the kernels."""

    def __init__(self, meta, wflat, bflat, layer_arrays, slot_channels, cmax):
        self.meta = meta
        self.wflat = wflat
        self.bflat = bflat
        self.layer_arrays = layer_arrays
        self.slot_channels = slot_channels
        self.cmax = cmax


def pack_model(model: VoxelDnn) -> PackedModel:
    if model.dtype != np.float32:
        model = model.astype(np.float32)
    layers = model.layers
    meta = np.full((len(layers), 10), -1, dtype=np.int64)
    slot_channels = [layers[0].cin]  # slot 0: raw input
    wparts, bparts, layer_arrays = [], [], []
    woff = boff = 0
    for j, layer in enumerate(layers):
        w = np.ascontiguousarray(layer.effective_weights(), dtype=np.float32)
        b = np.ascontiguousarray(layer.bias, dtype=np.float32)
        meta[j, _MASK] = layer.mask_tag
        meta[j, _K] = layer.k
        meta[j, _CIN] = layer.cin
        meta[j, _COUT] = layer.cout
        meta[j, _ACT] = layer.act_tag
        meta[j, _SKIP] = layer.skip_tag
        meta[j, _WOFF] = woff
        meta[j, _BOFF] = boff
        if layer.k > 1:
            if j == 0:
                meta[j, _IN_SLOT] = 0
            else:
                if meta[j - 1, _OUT_SLOT] < 0:
                    meta[j - 1, _OUT_SLOT] = len(slot_channels)
                    slot_channels.append(layers[j - 1].cout)
                meta[j, _IN_SLOT] = meta[j - 1, _OUT_SLOT]
        woff += w.size
        boff += b.size
        wparts.append(w.ravel())
        bparts.append(b)
        layer_arrays.append((w, b, layer.mask_tag, layer.act_tag, layer.skip_tag))
    return PackedModel(
        meta=meta,
        wflat=np.concatenate(wparts),
        bflat=np.concatenate(bparts),
        layer_arrays=layer_arrays,
        slot_channels=np.asarray(slot_channels, dtype=np.int64),
        cmax=max(max(l.cin, l.cout) for l in layers),
    )


def _check_binary(occ: np.ndarray) -> np.ndarray:
    occ = np.asarray(occ)
    if occ.ndim != 3 or len(set(occ.shape)) != 1:
        raise VxpcError(f"occupancy must be a cube, got shape {occ.shape}")
    if occ.dtype != np.uint8:
        occ = occ.astype(np.uint8)
    if occ.max(initial=0) > 1:
        raise VxpcError("occupancy values must be 0 or 1")
    return np.ascontiguousarray(occ)


def forward_field(packed: PackedModel, occ: np.ndarray) -> np.ndarray:
    """One whole-block pass: (d, d, d) occupancy -> (2, d, d, d) probabilities."""
    occ = _check_binary(occ)
    x = occ.astype(np.float32)[None]
    saved = x
    for w, b, mask_tag, act, skip in packed.layer_arrays:
        if x.shape[0] != w.shape[1]:
            raise VxpcError(f"channel mismatch: input {x.shape[0]}, layer {w.shape[1]}")
        if skip == SKIP_SAVE:
            saved = x
        out = _conv3d(x, w, b, mask_tag, act)
        if skip == SKIP_ADD:
            out += saved
        x = out
    if not np.isfinite(x).all():
        raise VxpcError("non-finite activation in forward pass")
    return _softmax_field(x)


def _alloc_cache(packed: PackedModel, d: int):
    sizes = packed.slot_channels * d**3
    slot_off = np.zeros(len(sizes), dtype=np.int64)
    np.cumsum(sizes[:-1], out=slot_off[1:])
    cache = np.zeros(int(sizes.sum()), dtype=np.float32)
    return cache, slot_off


def _scratch(packed: PackedModel):
    return (
        np.zeros(packed.cmax, dtype=np.float32),
        np.zeros(packed.cmax, dtype=np.float32),
        np.zeros(packed.cmax, dtype=np.float32),
    )


def sequential_probs(packed: PackedModel, occ: np.ndarray) -> np.ndarray:
    """P(voxel=1) per raster index, each computed before its voxel is revealed.

    This is exactly the decoder's view of the block; by the causality
    property it matches ``forward_field(...)[1]`` bit for bit.
    """
    occ = _check_binary(occ)
    d = occ.shape[0]
    cache, slot_off = _alloc_cache(packed, d)
    cur, nxt, saved = _scratch(packed)
    out_p1 = np.empty(d**3, dtype=np.float32)
    _sequential_probs(
        packed.meta, packed.wflat, packed.bflat, slot_off, cache, d, cur, nxt, saved,
        occ, out_p1,
    )
    return out_p1


def decode_block(packed: PackedModel, d: int, decoder) -> np.ndarray:
    """Decode a d-cube from an arithmetic decoder, feeding back each voxel."""
    cache, slot_off = _alloc_cache(packed, d)
    cur, nxt, saved = _scratch(packed)
    occ = np.zeros((d, d, d), dtype=np.uint8)
    _decode_block(
        packed.meta, packed.wflat, packed.bflat, slot_off, cache, d, cur, nxt, saved,
        decoder._st, decoder._data, occ,
    )
    return occ


def masked_conv_forward(volume: np.ndarray, layer) -> np.ndarray:
    """Apply one (possibly masked) convolution layer to a (C, d, d, d) volume.

    Float32 only; this is the inference path with the pinned summation order.
    """
    volume = np.ascontiguousarray(volume, dtype=np.float32)
    if volume.ndim != 3 and volume.ndim != 4:
        raise VxpcError(f"volume must be (C, d, d, d), got shape {volume.shape}")
    if volume.ndim == 3:
        volume = volume[None]
    if volume.shape[0] != layer.cin:
        raise VxpcError(
            f"channel mismatch: volume has {volume.shape[0]}, layer wants {layer.cin}"
        )
    w = np.ascontiguousarray(layer.effective_weights(), dtype=np.float32)
    b = np.ascontiguousarray(layer.bias, dtype=np.float32)
    return _conv3d(volume, w, b, layer.mask_tag, layer.act_tag)
