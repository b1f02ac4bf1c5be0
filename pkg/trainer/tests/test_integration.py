"""Cross-package acceptance: the trainer's exported weights drive the codec.

The only interface shared with the codec package is the VXDN byte format
(plus PLY files); these tests train here, export, and verify on the codec
side: checksum-valid load, the exact reference parameter count, forward
agreement between the two independent implementations, and a lossless
end-to-end encode/decode that beats the uniform baseline.
"""

import numpy as np
import pytest
import torch

from vxdnn_trainer import TrainingConfig, build_dataset, train_and_export

from test_data import write_ascii_ply

import vxpc
from vxpc.codec import NeuralModel, UniformModel, encode_point_cloud, decode_point_cloud
from vxpc.geometry import voxelize
from vxpc.synth import synth_cloud


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Train one epoch on a synthetic PLY corpus and export VXDN weights."""
    root = tmp_path_factory.mktemp("trainer_e2e")
    corpus = root / "corpus"
    corpus.mkdir()
    rng = np.random.default_rng(0)
    for i in range(10):
        shape = ("sphere", "plane")[i % 2]
        pts = synth_cloud(shape, 6, 4000, seed=100 + i)
        write_ascii_ply(corpus / f"cloud_{i:02d}.ply", pts)
    export_path = str(root / "model.vxdn")
    config = TrainingConfig(
        data_dirs=[str(corpus)],
        block_side=8,          # plenty of blocks, cheap epochs
        batch_size=8,
        epochs=1,
        learning_rate=0.01,
        seed=0,
        test_fraction=0.1,
        export_path=export_path,
    )
    train_blocks, _ = build_dataset(
        config.data_dirs, config.block_side, config.seed, config.test_fraction
    )
    assert len(train_blocks) >= 100
    net, history, _ = train_and_export(config)
    return net, history, export_path


class TestExportConsume:
    def test_codec_loads_weights_with_valid_checksum(self, trained):
        _, _, path = trained
        loaded = vxpc.read_model(path)
        assert loaded.param_count() == 290_754

    def test_forward_outputs_agree_across_implementations(self, trained):
        torch_net, _, path = trained
        codec_net = vxpc.read_model(path)
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(10):
            occ = (rng.random((16, 16, 16)) < rng.uniform(0.05, 0.5)).astype(np.uint8)
            theirs = torch_net.probabilities(occ)
            ours = codec_net.forward(occ)
            worst = max(worst, float(np.abs(theirs - ours).max()))
        assert worst <= 1e-3, f"max abs prob difference {worst:.2e}"

    def test_end_to_end_lossless_and_beats_uniform(self, trained):
        _, _, path = trained
        codec_net = vxpc.read_model(path)
        pts = synth_cloud("sphere", 6, 6000, seed=777)  # held out from training
        expected = voxelize(pts, 6)

        data, report = encode_point_cloud(pts, 6, 1, NeuralModel(codec_net))
        decoded = decode_point_cloud(data, weights=codec_net)
        assert np.array_equal(decoded, expected)

        _, uniform_report = encode_point_cloud(pts, 6, 1, UniformModel())
        assert report.bpov < uniform_report.bpov
