import json
import struct

import numpy as np
import pytest

from helpers import make_config, token_sequences
from slicekit.checkpoint import load_checkpoint, save_checkpoint
from slicekit.errors import (
    DtypeMismatchError,
    MalformedHeaderError,
    MissingTensorError,
    TruncatedPayloadError,
    UnknownTensorError,
)
from slicekit.invariance import convert_to_rmsnorm
from slicekit.model import forward, models_equal, random_model
from slicekit.slicer import SliceSpec, calibrate, choose_dims, slice_model


def read_header(path):
    with open(path, "rb") as f:
        raw = f.read()
    (hlen,) = struct.unpack("<Q", raw[:8])
    return json.loads(raw[8 : 8 + hlen]), raw, hlen


def rewrite(path, header, raw, hlen):
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(raw[8 + hlen :])


class TestRoundTrip:
    def test_rmsnorm_model(self, small_rms_model, tmp_path):
        p = tmp_path / "m.ckpt"
        save_checkpoint(small_rms_model, p)
        loaded = load_checkpoint(p)
        assert models_equal(small_rms_model, loaded)

    def test_layernorm_model(self, small_ln_model, tmp_path):
        p = tmp_path / "m.ckpt"
        save_checkpoint(small_ln_model, p)
        assert models_equal(small_ln_model, load_checkpoint(p))

    def test_converted_model_keeps_adapters(self, small_ln_model, tmp_path):
        conv = convert_to_rmsnorm(small_ln_model)
        p = tmp_path / "m.ckpt"
        save_checkpoint(conv, p)
        loaded = load_checkpoint(p)
        assert loaded.residual_adapters is not None
        assert models_equal(conv, loaded)

    def test_sliced_model(self, small_rms_model, tmp_path):
        rot, stats = calibrate(small_rms_model, token_sequences(50, count=4))
        dims = choose_dims(stats, SliceSpec.constant(0.25), 16)
        sliced = slice_model(small_rms_model, rot, dims)
        p = tmp_path / "m.ckpt"
        save_checkpoint(sliced, p)
        loaded = load_checkpoint(p)
        assert loaded.sliced_dims == sliced.sliced_dims
        assert models_equal(sliced, loaded)

    def test_single_precision(self, tmp_path):
        m = random_model(make_config(precision="single"), seed=7)
        p = tmp_path / "m.ckpt"
        save_checkpoint(m, p)
        loaded = load_checkpoint(p)
        assert loaded.w_embd.dtype == np.float32
        assert models_equal(m, loaded)

    def test_deterministic_bytes(self, small_rms_model, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(small_rms_model, a)
        save_checkpoint(small_rms_model, b)
        assert a.read_bytes() == b.read_bytes()

    def test_logits_preserved(self, small_rms_model, tmp_path):
        p = tmp_path / "m.ckpt"
        save_checkpoint(small_rms_model, p)
        seq = token_sequences(50, count=1)[0]
        np.testing.assert_array_equal(forward(small_rms_model, seq), forward(load_checkpoint(p), seq))


class TestCorruption:
    @pytest.fixture
    def ckpt(self, small_rms_model, tmp_path):
        p = tmp_path / "m.ckpt"
        save_checkpoint(small_rms_model, p)
        return p

    def test_too_short(self, tmp_path):
        p = tmp_path / "x.ckpt"
        p.write_bytes(b"\x01\x02")
        with pytest.raises(MalformedHeaderError):
            load_checkpoint(p)

    def test_header_length_beyond_file(self, ckpt):
        raw = ckpt.read_bytes()
        ckpt.write_bytes(struct.pack("<Q", len(raw) * 2) + raw[8:])
        with pytest.raises(MalformedHeaderError):
            load_checkpoint(ckpt)

    def test_invalid_json(self, ckpt):
        header, raw, hlen = read_header(ckpt)
        blob = b"{not json" + b" " * 20
        ckpt.write_bytes(struct.pack("<Q", len(blob)) + blob + raw[8 + hlen :])
        with pytest.raises(MalformedHeaderError):
            load_checkpoint(ckpt)

    def test_missing_metadata(self, ckpt):
        header, raw, hlen = read_header(ckpt)
        del header["__metadata__"]
        rewrite(ckpt, header, raw, hlen)
        with pytest.raises(MalformedHeaderError):
            load_checkpoint(ckpt)

    def test_unknown_tensor(self, ckpt):
        header, raw, hlen = read_header(ckpt)
        header["mystery.w"] = {"dtype": "f64", "shape": [1], "data_offsets": [0, 8]}
        rewrite(ckpt, header, raw, hlen)
        with pytest.raises(UnknownTensorError):
            load_checkpoint(ckpt)

    def test_missing_tensor(self, ckpt):
        header, raw, hlen = read_header(ckpt)
        del header["head.w"]
        rewrite(ckpt, header, raw, hlen)
        with pytest.raises(MissingTensorError):
            load_checkpoint(ckpt)

    def test_truncated_payload(self, ckpt):
        raw = ckpt.read_bytes()
        ckpt.write_bytes(raw[:-16])
        with pytest.raises(TruncatedPayloadError):
            load_checkpoint(ckpt)

    def test_dtype_mismatch(self, ckpt):
        header, raw, hlen = read_header(ckpt)
        # model precision is double; claim a tensor is f32 (half the bytes)
        entry = header["head.b"]
        entry["dtype"] = "f32"
        begin, end = entry["data_offsets"]
        entry["data_offsets"] = [begin, begin + (end - begin) // 2]
        rewrite(ckpt, header, raw, hlen)
        with pytest.raises(DtypeMismatchError):
            load_checkpoint(ckpt)

    def test_span_shape_mismatch(self, ckpt):
        header, raw, hlen = read_header(ckpt)
        begin, end = header["head.b"]["data_offsets"]
        header["head.b"]["data_offsets"] = [begin, end - 8]
        rewrite(ckpt, header, raw, hlen)
        with pytest.raises(MalformedHeaderError):
            load_checkpoint(ckpt)

    def test_partial_adapter_set(self, small_ln_model, tmp_path):
        conv = convert_to_rmsnorm(small_ln_model)
        p = tmp_path / "m.ckpt"
        save_checkpoint(conv, p)
        header, raw, hlen = read_header(p)
        del header["adapter.0"]
        rewrite(p, header, raw, hlen)
        with pytest.raises(MissingTensorError):
            load_checkpoint(p)
