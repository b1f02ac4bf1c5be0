"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.
"""

import time

import numpy as np
import pytest

from vxpc.codec import (
    AdaptiveModel,
    NeuralModel,
    UniformModel,
    decode_point_cloud,
    encode_point_cloud,
    partition_encode,
)
from vxpc.entropy import RangeDecoder, RangeEncoder
from vxpc.geometry import voxelize
from vxpc.neural import (
    build_reference_model,
    build_tiny_model,
    make_mask,
    sequential_probs,
    train,
)
from vxpc.synth import synth_blocks, synth_cloud
from test_codec import _enumerate_trees, _uniform_leaf_cost
from test_training import _off_kink_tiny_model, finite_difference_sweep


def _ok(name):
    print(f"PASS  {name}")


class TestAcceptance:
    def test_losslessness_sweep(self):
        """100 randomized clouds, every model and partition depth covered,
        exact voxel-set recovery each time (< 10 min)."""
        t0 = time.time()
        tiny = build_tiny_model(0)  # random weights, never trained
        runs = 0
        for s in range(100):
            # models and levels round-robin so every cell gets ~11 clouds;
            # shape, depth, and size draw from a per-cloud RNG
            draw = np.random.default_rng(9000 + s)
            shape = ("sphere", "plane", "random")[int(draw.integers(0, 3))]
            model_kind = ("uniform", "adaptive", "voxeldnn")[s % 3]
            max_lv = (1, 3, 5)[(s // 3) % 3]
            if model_kind == "voxeldnn":
                depth = 6  # neural runs restricted to one 64-cube with the tiny net
                model = NeuralModel(tiny)
            else:
                depth = int(draw.integers(6, 9))
                model = UniformModel() if model_kind == "uniform" else AdaptiveModel()
            points = int(draw.integers(500, 50_001))
            pts = synth_cloud(shape, depth, points, seed=1000 + s)
            expected = voxelize(pts, depth)
            data, report = encode_point_cloud(pts, depth, max_lv, model)
            weights = tiny if model_kind == "voxeldnn" else None
            decoded = decode_point_cloud(data, weights=weights)
            assert np.array_equal(decoded, expected), (
                f"cloud {s}: {shape} n={depth} model={model_kind} maxLv={max_lv}"
            )
            assert report.total_bits == 8 * len(data)
            runs += 1
        elapsed = time.time() - t0
        assert runs == 100
        assert elapsed < 600, f"sweep took {elapsed:.0f}s, budget is 600s"
        _ok(f"losslessness: 100/100 clouds exact across models and levels "
            f"({elapsed:.0f}s)")

    def test_reference_parameter_count(self):
        """The full-size network has exactly 290,754 parameters."""
        for seed in (0, 7, 12345):
            assert build_reference_model(seed).param_count() == 290_754
        _ok("reference model parameter count == 290,754")

    def test_mask_and_causality_suite(self):
        """Mask cardinalities and 200 future-perturbation trials with zero
        bit-level leakage."""
        for k in (3, 5, 7):
            assert int(make_mask(k, "A").sum()) == k**3 // 2
            assert int(make_mask(k, "B").sum()) == k**3 // 2 + 1
        net = build_tiny_model(1)
        rng = np.random.default_rng(2024)
        for trial in range(200):
            occ = (rng.random((8, 8, 8)) < rng.uniform(0.05, 0.7)).astype(np.uint8)
            base = net.forward(occ)[1].ravel()
            j = int(rng.integers(0, 512))
            flipped = occ.copy().ravel()
            flipped[j] ^= 1
            probs = net.forward(flipped.reshape(8, 8, 8))[1].ravel()
            assert np.array_equal(base[: j + 1], probs[: j + 1])
        _ok("mask cardinalities and 200/200 perturbation trials bit-exact")

    def test_one_pass_equals_sequential(self):
        """Whole-block forward equals voxel-by-voxel evaluation bit for bit."""
        net = build_tiny_model(2)
        rng = np.random.default_rng(7)
        for trial in range(20):
            occ = (rng.random((8, 8, 8)) < rng.uniform(0.1, 0.6)).astype(np.uint8)
            one = net.forward(occ)[1].ravel()
            seq = sequential_probs(net.packed(), occ)
            assert np.array_equal(one, seq)
        _ok("one-pass forward == sequential evaluation on 20/20 blocks")

    def test_gradient_check(self):
        """Analytic gradients match central differences (eps=1e-4, float64)
        within 1e-4 relative error for every parameter, on three blocks.

        Test points are pinned away from ReLU kinks (verified by the sweep's
        sign-pattern guard), where the finite-difference oracle is valid."""
        model = _off_kink_tiny_model(0)
        for block_seed in (50, 52, 53):
            occ = (np.random.default_rng(block_seed).random((4, 4, 4)) < 0.4).astype(np.uint8)
            worst, crossings = finite_difference_sweep(model, occ, eps=1e-4)
            assert crossings == 0
            assert worst <= 1e-4, f"block {block_seed}: worst {worst:.2e}"
        _ok("gradient vs finite differences <= 1e-4 on 3 blocks, all parameters")

    def test_coder_efficiency(self):
        """Code length within 0.2% + 64 bits of the probability-model ideal
        on a 1e5-symbol random stream; decoding is exact."""
        rng = np.random.default_rng(99)
        n = 100_000
        qs = rng.integers(1, 65536, n)
        bits = (rng.random(n) < qs / 65536.0).astype(np.uint8)
        enc = RangeEncoder()
        enc.encode_bits(bits, qs)
        data = enc.flush()
        p1 = qs / 65536.0
        ideal = float(np.sum(-np.log2(np.where(bits == 1, p1, 1 - p1))))
        actual = 8 * len(data)
        assert abs(actual - ideal) <= 0.002 * ideal + 64
        assert np.array_equal(RangeDecoder(data).decode_bits(qs), bits)
        _ok(f"coder efficiency: {actual} bits vs ideal {ideal:.0f} "
            f"({100 * (actual - ideal) / ideal:+.3f}%)")

    def test_partition_optimality(self):
        """Partitioner cost equals exhaustive enumeration over all valid
        trees on 50 random 16-cubes (maxLv 3, uniform model); ties pick the
        unsplit block."""
        rng = np.random.default_rng(31)
        ties = 0
        for trial in range(50):
            occ = (rng.random((16, 16, 16)) < rng.uniform(0.01, 0.5)).astype(np.uint8)
            if not occ.any():
                occ[0, 0, 0] = 1
            flags, payload = partition_encode(occ, 1, 3, UniformModel())
            chosen = payload + 2 * len(flags)
            brute = min(2 * f + b for f, b in _enumerate_trees(occ, 1, 3))
            assert chosen == brute
            single = _uniform_leaf_cost(occ) + 2
            assert chosen <= single
            if chosen == single:
                ties += 1
                assert flags == [1]
        _ok(f"partition optimality: 50/50 match brute force ({ties} single-cost cases)")

    def test_partition_depth_monotonicity(self):
        """Allowing deeper partitions never enlarges the container."""
        for shape, seed in (("sphere", 40), ("plane", 41), ("random", 42)):
            pts = synth_cloud(shape, 7, 12_000, seed)
            sizes = {}
            for lv in (1, 2, 4):
                data, _ = encode_point_cloud(pts, 7, lv, AdaptiveModel())
                sizes[lv] = len(data)
            assert sizes[4] <= sizes[2] <= sizes[1], (shape, sizes)
        _ok("container size monotone: maxLv 4 <= 2 <= 1 on all shapes")

    def test_training_smoke(self):
        """20 epochs on 200 structured cubes reduce the loss, and the trained
        model out-codes the uniform baseline on held-out cubes."""
        blocks = synth_blocks(200, side=8, seed=10)[:200]
        held_out = synth_blocks(60, side=8, seed=11)
        net = build_tiny_model(3)
        trained, history = train(net, blocks, epochs=20, batch_size=8, seed=0)
        assert history[-1] < history[0]

        model = NeuralModel(trained)
        neural_bits = uniform_bits = 0
        voxels = 0
        for occ in held_out:
            enc = RangeEncoder()
            model.encode_block(enc, occ)
            neural_bits += enc.bits_emitted
            enc = RangeEncoder()
            UniformModel().encode_block(enc, occ)
            uniform_bits += enc.bits_emitted
            voxels += int(occ.sum())
        assert neural_bits < uniform_bits
        _ok(
            f"training smoke: loss {history[0]:.1f} -> {history[-1]:.1f} bits/block; "
            f"held-out bpov {neural_bits / voxels:.3f} < uniform {uniform_bits / voxels:.3f}"
        )
