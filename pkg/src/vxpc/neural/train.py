"""Float64 training path: loss, reverse-mode gradients, Adam, small-scale loop.

Training never needs the bit-exact float32 summation discipline of
:mod:`vxpc.neural.infer`, so the convolutions here are ordinary vectorized
numpy in float64, which also gives the headroom the finite-difference
gradient checks rely on.  Causality is still enforced by multiplying
kernels with their masks, and the gradients of masked taps are forced to
exact zero so optimizer steps can never disturb them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import VxpcError
from .model import VoxelDnn

LOG2E = 1.0 / np.log(2.0)
P_MIN = 2.0**-16  # floor applied to the observed symbol's probability


def _conv3d_f64(x, w, b):
    cin, d = x.shape[0], x.shape[1]
    cout, k = w.shape[0], w.shape[2]
    r = k // 2
    xp = np.zeros((cin, d + 2 * r, d + 2 * r, d + 2 * r), dtype=np.float64)
    xp[:, r : r + d, r : r + d, r : r + d] = x
    out = np.broadcast_to(b[:, None], (cout, d**3)).copy()
    for tx in range(k):
        for ty in range(k):
            for tz in range(k):
                wt = w[:, :, tx, ty, tz]
                if not wt.any():
                    continue
                xs = np.ascontiguousarray(
                    xp[:, tx : tx + d, ty : ty + d, tz : tz + d]
                ).reshape(cin, -1)
                out += wt @ xs
    return out.reshape(cout, d, d, d)


def _forward_tape(model: VoxelDnn, occ: np.ndarray):
    """Forward pass keeping everything backward needs.

    Returns (probs (2,d,d,d), tape); tape entries are
    (layer, input, pre_activation, effective_weights).
    """
    occ = np.asarray(occ)
    x = occ.astype(np.float64)[None]
    tape = []
    saved_stack = []
    for layer in model.layers:
        w = layer.effective_weights().astype(np.float64)
        b = layer.bias.astype(np.float64)
        if layer.skip == "save":
            saved_stack.append(x)
        pre = _conv3d_f64(x, w, b)
        out = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
        if layer.skip == "add":
            out = out + saved_stack.pop()
        tape.append((layer, x, pre, w))
        x = out
    logits = x
    m = logits.max(axis=0, keepdims=True)
    e = np.exp(logits - m)
    probs = e / e.sum(axis=0, keepdims=True)
    return probs, tape


def forward_probs64(model: VoxelDnn, occ: np.ndarray) -> np.ndarray:
    """Float64 probabilities, shape (2, d, d, d); training-side counterpart
    of :meth:`VoxelDnn.forward`."""
    probs, _ = _forward_tape(model, occ)
    return probs


def cross_entropy_bits(probs: np.ndarray, occ: np.ndarray) -> float:
    """Total code length in bits: sum of -log2 p(observed voxel).

    The observed symbol's probability is floored at 2**-16 so a confidently
    wrong model yields a large finite cost instead of infinity.
    """
    probs = np.asarray(probs, dtype=np.float64)
    occ = np.asarray(occ)
    if probs.shape[0] != 2:
        raise VxpcError(f"probability field must have 2 channels, got {probs.shape}")
    if probs.shape[1:] != occ.shape:
        raise VxpcError(f"probability field {probs.shape} does not match block {occ.shape}")
    if (probs < 0).any() or (probs > 1).any():
        raise VxpcError("probabilities outside [0, 1]")
    p_obs = np.where(occ.astype(bool), probs[1], probs[0])
    return float(-np.log2(np.maximum(p_obs, P_MIN)).sum())


def block_loss_bits(model: VoxelDnn, occ: np.ndarray) -> float:
    probs, _ = _forward_tape(model, occ)
    return cross_entropy_bits(probs, occ)


def backward(model: VoxelDnn, occ: np.ndarray):
    """Gradient of the block's cross-entropy (in bits) w.r.t. every parameter.

    Returns (loss_bits, grads) with grads matching ``model.parameters()``
    order.  Gradients of masked kernel taps are identically zero.
    """
    occ = np.asarray(occ)
    probs, tape = _forward_tape(model, occ)
    loss = cross_entropy_bits(probs, occ)

    onehot = np.zeros_like(probs)
    occ_b = occ.astype(bool)
    onehot[1][occ_b] = 1.0
    onehot[0][~occ_b] = 1.0
    g = (probs - onehot) * LOG2E
    # where the observed probability was floored, the loss is locally constant
    p_obs = np.where(occ_b, probs[1], probs[0])
    g[:, p_obs < P_MIN] = 0.0

    grads = [None] * (2 * len(model.layers))
    skip_stack = []
    for idx in range(len(tape) - 1, -1, -1):
        layer, x_in, pre, w = tape[idx]
        if layer.skip == "add":
            skip_stack.append(g)
        if layer.activation == "relu":
            g = g * (pre > 0)
        cin, d = x_in.shape[0], x_in.shape[1]
        cout, k = w.shape[0], w.shape[2]
        r = k // 2
        gm = g.reshape(cout, -1)
        xp = np.zeros((cin, d + 2 * r, d + 2 * r, d + 2 * r), dtype=np.float64)
        xp[:, r : r + d, r : r + d, r : r + d] = x_in
        dw = np.zeros_like(w)
        gxp = np.zeros_like(xp)
        for tx in range(k):
            for ty in range(k):
                for tz in range(k):
                    xs = np.ascontiguousarray(
                        xp[:, tx : tx + d, ty : ty + d, tz : tz + d]
                    ).reshape(cin, -1)
                    dw[:, :, tx, ty, tz] = gm @ xs.T
                    gxp[:, tx : tx + d, ty : ty + d, tz : tz + d] += (
                        w[:, :, tx, ty, tz].T @ gm
                    ).reshape(cin, d, d, d)
        if layer.mask is not None:
            dw *= layer.mask_array().astype(np.float64)
        grads[2 * idx] = dw
        grads[2 * idx + 1] = gm.sum(axis=1)
        g = gxp[:, r : r + d, r : r + d, r : r + d]
        if layer.skip == "save":
            g = g + skip_stack.pop()
    return loss, grads


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter array."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_model(cls, model: VoxelDnn) -> "AdamState":
        params = model.parameters()
        return cls(
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
        )


def adam_step(model: VoxelDnn, grads, state: AdamState, lr=0.001,
              beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """One bias-corrected Adam update, in place on the model's parameters."""
    state.t += 1
    t = state.t
    for p, g, m, v in zip(model.parameters(), grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)


def train(model: VoxelDnn, blocks, epochs: int, batch_size: int = 8,
          lr: float = 0.001, seed: int = 0):
    """Desk-scale trainer: full-batch-of-`batch_size` Adam over the blocks.

    Works on a float64 copy and returns a float32 model for inference, plus
    the per-epoch mean cross-entropy (bits per block).  Deterministic for a
    fixed seed and block order.
    """
    if epochs < 1 or batch_size < 1:
        raise VxpcError("epochs and batch_size must be positive")
    work = model.astype(np.float64)
    history = []
    blocks = list(blocks)
    if not blocks:
        return model.astype(np.float32), history
    state = AdamState.for_model(work)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(blocks))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            grad_sum = None
            for bi in batch:
                loss, grads = backward(work, blocks[bi])
                losses.append(loss)
                if grad_sum is None:
                    grad_sum = grads
                else:
                    for acc, g in zip(grad_sum, grads):
                        acc += g
            mean_grads = [g / len(batch) for g in grad_sum]
            adam_step(work, mean_grads, state, lr=lr)
        history.append(float(np.mean(losses)))
    return work.astype(np.float32), history
