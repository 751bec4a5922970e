import json

import numpy as np
import pytest

from helpers import make_config
from slicekit.checkpoint import load_checkpoint, save_checkpoint
from slicekit.cli import main, read_corpus
from slicekit.model import random_model


@pytest.fixture
def rms_ckpt(tmp_path):
    m = random_model(make_config(vocab_size=256, max_seq_len=32), seed=61)
    p = tmp_path / "rms.ckpt"
    save_checkpoint(m, p)
    return p


@pytest.fixture
def ln_ckpt(tmp_path):
    m = random_model(make_config(vocab_size=256, max_seq_len=32, norm_kind="layernorm"), seed=62)
    p = tmp_path / "ln.ckpt"
    save_checkpoint(m, p)
    return p


@pytest.fixture
def corpus_txt(tmp_path):
    p = tmp_path / "corpus.txt"
    p.write_text("the quick brown fox jumps over the lazy dog. " * 40)
    return p


def last_json(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


class TestReadCorpus:
    def test_bytes_mode(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("AB")
        np.testing.assert_array_equal(read_corpus(p), [65, 66])

    def test_u32_mode(self, tmp_path):
        p = tmp_path / "c.tokens"
        p.write_bytes(np.array([7, 300, 5], dtype="<u4").tobytes())
        np.testing.assert_array_equal(read_corpus(p), [7, 300, 5])


class TestConvert:
    def test_convert_roundtrip(self, ln_ckpt, tmp_path, capsys):
        out = tmp_path / "conv.ckpt"
        assert main(["convert", "--model", str(ln_ckpt), "--out", str(out)]) == 0
        summary = last_json(capsys)
        assert summary["command"] == "convert"
        assert summary["norm_kind"] == "rmsnorm"
        assert load_checkpoint(out).config.norm_kind == "rmsnorm"

    def test_convert_rmsnorm_input_fails_state(self, rms_ckpt, tmp_path):
        assert main(["convert", "--model", str(rms_ckpt), "--out", str(tmp_path / "x.ckpt")]) == 4


class TestSlice:
    def test_slice_fraction(self, rms_ckpt, corpus_txt, tmp_path, capsys):
        out = tmp_path / "sliced.ckpt"
        report = tmp_path / "report.json"
        rc = main(
            [
                "slice",
                "--model", str(rms_ckpt),
                "--corpus", str(corpus_txt),
                "--out", str(out),
                "--slice-fraction", "0.25",
                "--cal-count", "8",
                "--cal-seqlen", "16",
                "--report", str(report),
            ]
        )
        assert rc == 0
        summary = last_json(capsys)
        assert summary["dims"] == [12] * 5
        m = load_checkpoint(out)
        assert m.sliced_dims == [12] * 5
        rows = json.loads(report.read_text())
        assert len(rows) == 5

    def test_slice_converts_layernorm_input(self, ln_ckpt, corpus_txt, tmp_path):
        out = tmp_path / "sliced.ckpt"
        rc = main(
            [
                "slice",
                "--model", str(ln_ckpt),
                "--corpus", str(corpus_txt),
                "--out", str(out),
                "--slice-dims", "12,12,12,12,12",
                "--cal-count", "4",
                "--cal-seqlen", "16",
            ]
        )
        assert rc == 0
        assert load_checkpoint(out).config.norm_kind == "rmsnorm"

    def test_requires_exactly_one_policy(self, rms_ckpt, corpus_txt, tmp_path):
        rc = main(
            [
                "slice",
                "--model", str(rms_ckpt),
                "--corpus", str(corpus_txt),
                "--out", str(tmp_path / "x.ckpt"),
                "--slice-fraction", "0.25",
                "--variance-discard", "0.1",
                "--cal-count", "4",
                "--cal-seqlen", "16",
            ]
        )
        assert rc == 4


class TestVerify:
    def test_identical_checkpoints_pass(self, rms_ckpt, capsys):
        assert main(["verify", str(rms_ckpt), str(rms_ckpt)]) == 0
        summary = last_json(capsys)
        assert summary["ok"] is True
        assert summary["max_divergence"] == 0.0

    def test_divergent_checkpoints_exit_one(self, rms_ckpt, tmp_path, capsys):
        other = random_model(make_config(vocab_size=256, max_seq_len=32), seed=99)
        p = tmp_path / "other.ckpt"
        save_checkpoint(other, p)
        with pytest.raises(SystemExit) as e:
            main(["verify", str(rms_ckpt), str(p), "--threshold", "1e-6"])
        assert e.value.code == 1


class TestEval:
    def test_eval_summary(self, rms_ckpt, corpus_txt, capsys):
        rc = main(["eval", "--model", str(rms_ckpt), "--corpus", str(corpus_txt), "--seq-len", "16"])
        assert rc == 0
        summary = last_json(capsys)
        assert summary["command"] == "eval"
        assert summary["perplexity"] > 0
        assert summary["n_tokens"] > 0


class TestSpectrum:
    def test_spectrum_csv(self, rms_ckpt, corpus_txt, tmp_path, capsys):
        out = tmp_path / "spec.csv"
        rc = main(
            [
                "spectrum",
                "--model", str(rms_ckpt),
                "--corpus", str(corpus_txt),
                "--out", str(out),
                "--cal-count", "4",
                "--cal-seqlen", "16",
            ]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "boundary,index,normalized_eigenvalue"
        assert len(lines) == 1 + 5 * 16


class TestBench:
    def test_bench_small(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        rc = main(
            [
                "bench",
                "--out", str(out),
                "--dim", "64",
                "--heads", "4",
                "--seq", "32",
                "--reps", "10",
                "--warmup", "1",
                "--fractions", "0.25",
            ]
        )
        assert rc == 0
        assert out.read_text().splitlines()[0] == "op,m,k,n,fraction,median_ms,speedup"


class TestExitCodes:
    def test_missing_file_is_bad_args(self, tmp_path):
        assert main(["convert", "--model", str(tmp_path / "no.ckpt"), "--out", str(tmp_path / "o")]) == 2

    def test_corrupt_checkpoint_is_parse_error(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_bytes(b"\x00" * 4)
        assert main(["convert", "--model", str(p), "--out", str(tmp_path / "o")]) == 3

    def test_bad_arguments_exit_two(self):
        with pytest.raises(SystemExit) as e:
            main(["slice"])  # missing required arguments
        assert e.value.code == 2

    def test_numeric_error_exit_five(self, rms_ckpt, tmp_path):
        tiny = tmp_path / "tiny.txt"
        tiny.write_text("ab")  # far fewer tokens than one calibration window
        rc = main(
            [
                "slice",
                "--model", str(rms_ckpt),
                "--corpus", str(tiny),
                "--out", str(tmp_path / "x.ckpt"),
                "--slice-fraction", "0.25",
                "--cal-seqlen", "16",
            ]
        )
        assert rc == 5
