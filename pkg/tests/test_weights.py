import io

import numpy as np
import pytest

from vxpc.errors import FormatError
from vxpc.neural import (
    build_reference_model,
    build_tiny_model,
    model_checksum,
    model_to_bytes,
    read_model,
    write_model,
)


class TestWeightFile:
    def test_magic_and_layout(self):
        data = model_to_bytes(build_tiny_model(0))
        assert data[:4] == b"VXDN"
        assert data[4] == 1  # version
        assert data[5] == 6  # tiny layer count

    def test_roundtrip_preserves_values(self):
        net = build_tiny_model(3)
        back = read_model(model_to_bytes(net))
        assert back.param_count() == net.param_count()
        for a, b in zip(net.layers, back.layers):
            assert (a.mask, a.k, a.cin, a.cout, a.activation, a.skip) == (
                b.mask, b.k, b.cin, b.cout, b.activation, b.skip
            )
            # files store mask-zeroed weights; unmasked values survive exactly
            assert np.array_equal(a.effective_weights(), b.effective_weights())
            assert np.array_equal(a.bias, b.bias)

    def test_reference_model_roundtrip_parameter_count(self):
        net = build_reference_model(1)
        assert read_model(model_to_bytes(net)).param_count() == 290_754

    def test_file_roundtrip(self, tmp_path):
        net = build_tiny_model(4)
        path = str(tmp_path / "weights.vxdn")
        write_model(net, path)
        back = read_model(path)
        rng = np.random.default_rng(0)
        occ = (rng.random((8, 8, 8)) < 0.4).astype(np.uint8)
        assert np.array_equal(net.forward(occ), back.forward(occ))

    def test_checksum_detects_corruption(self):
        data = bytearray(model_to_bytes(build_tiny_model(5)))
        data[40] ^= 0xFF
        with pytest.raises(FormatError, match="checksum"):
            read_model(bytes(data))

    def test_bad_magic(self):
        data = b"NOPE" + model_to_bytes(build_tiny_model(0))[4:]
        with pytest.raises(FormatError, match="magic"):
            read_model(data)

    def test_truncated_file(self):
        data = model_to_bytes(build_tiny_model(0))[:20]
        with pytest.raises(FormatError):
            read_model(data)

    def test_checksum_stable_across_identical_models(self):
        assert model_checksum(build_tiny_model(7)) == model_checksum(build_tiny_model(7))
        assert model_checksum(build_tiny_model(7)) != model_checksum(build_tiny_model(8))

    def test_stream_roundtrip(self):
        net = build_tiny_model(6)
        buf = io.BytesIO()
        write_model(net, buf)
        buf.seek(0)
        back = read_model(buf)
        assert model_checksum(back) == model_checksum(net)
