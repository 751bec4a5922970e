"""Command-line front end: convert, slice, verify, eval, spectrum, bench.

Every command logs to stderr and ends stdout with a single JSON summary
line.  Exit codes: 2 bad arguments, 3 checkpoint parse, 4 shape/state,
5 numeric (convergence/degenerate).
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import errors
from .checkpoint import load_checkpoint, save_checkpoint
from .evalbench import bench_layer_matmuls, perplexity, write_bench_csv, export_spectrum
from .invariance import convert_to_rmsnorm, max_logit_divergence
from .model import LAYERNORM, ModelConfig, forward
from .slicer import SliceSpec, calibrate, choose_dims, slice_model, write_slicing_report

log = logging.getLogger("slicekit")

EXIT_BAD_ARGS = 2
EXIT_CHECKPOINT = 3
EXIT_SHAPE_STATE = 4
EXIT_NUMERIC = 5

_NUMERIC_ERRORS = (errors.ConvergenceError, errors.DegenerateInputError, errors.CalibrationError)
_STATE_ERRORS = (
    errors.ShapeError,
    errors.StateError,
    errors.InvalidSpecError,
    errors.InvalidRotationError,
    errors.VocabularyError,
    errors.DimensionError,
)


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def read_corpus(path, fmt: str = "auto") -> np.ndarray:
    """Token ids from a corpus file: UTF-8 bytes, or u32 little-endian ids."""
    if fmt == "auto":
        fmt = "u32" if str(path).endswith((".tokens", ".bin")) else "bytes"
    with open(path, "rb") as f:
        raw = f.read()
    if fmt == "u32":
        return np.frombuffer(raw, dtype="<u4").astype(np.int64)
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def _calibration_sequences(corpus: np.ndarray, count: int, seq_len: int, seed: int):
    if corpus.size < seq_len:
        raise errors.CalibrationError(
            f"corpus has {corpus.size} tokens; need at least one window of {seq_len}"
        )
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, corpus.size - seq_len + 1, size=count)
    return [corpus[s : s + seq_len] for s in sorted(starts.tolist())]


def _slice_spec_from_args(args) -> SliceSpec:
    given = [args.slice_fraction is not None, args.slice_dims is not None, args.variance_discard is not None]
    if sum(given) != 1:
        raise errors.InvalidSpecError(
            "exactly one of --slice-fraction, --slice-dims, --variance-discard is required"
        )
    if args.slice_fraction is not None:
        return SliceSpec.constant(args.slice_fraction, round_to_multiple=args.round_to)
    if args.variance_discard is not None:
        return SliceSpec.variance(args.variance_discard, round_to_multiple=args.round_to)
    dims = [int(x) for x in args.slice_dims.split(",")]
    return SliceSpec.explicit(dims)


def cmd_convert(args) -> None:
    model = load_checkpoint(args.model)
    converted = convert_to_rmsnorm(model)
    save_checkpoint(converted, args.out)
    _emit({"command": "convert", "out": str(args.out), "norm_kind": converted.config.norm_kind})


def cmd_slice(args) -> None:
    model = load_checkpoint(args.model)
    if model.config.norm_kind == LAYERNORM:
        log.info("input is in layernorm form; converting to rmsnorm first")
        model = convert_to_rmsnorm(model)
    corpus = read_corpus(args.corpus, args.corpus_format)
    seq_len = args.cal_seqlen or model.config.max_seq_len
    sequences = _calibration_sequences(corpus, args.cal_count, seq_len, args.seed)
    log.info("calibrating over %d sequences of length %d", len(sequences), seq_len)
    rotations, stats = calibrate(model, sequences)
    spec = _slice_spec_from_args(args)
    dims = choose_dims(stats, spec, model.config.embed_dim)
    log.info("retained dims: %s", dims)
    sliced = slice_model(model, rotations, dims)
    save_checkpoint(sliced, args.out)
    if args.report:
        write_slicing_report(args.report, stats, dims)
    _emit(
        {
            "command": "slice",
            "out": str(args.out),
            "dims": dims,
            "report": str(args.report) if args.report else None,
        }
    )


def cmd_verify(args) -> None:
    a = load_checkpoint(args.a_ckpt)
    b = load_checkpoint(args.b_ckpt)
    rng = np.random.default_rng(args.seed)
    n = min(a.config.max_seq_len, b.config.max_seq_len, 32)
    seqs = [rng.integers(0, a.config.vocab_size, size=n) for _ in range(args.sequences)]
    div = max_logit_divergence(a, b, seqs)
    ok = div <= args.threshold
    _emit({"command": "verify", "max_divergence": div, "threshold": args.threshold, "ok": ok})
    if not ok:
        sys.exit(1)


def cmd_eval(args) -> None:
    model = load_checkpoint(args.model)
    corpus = read_corpus(args.corpus, args.corpus_format)
    seq_len = args.seq_len or model.config.max_seq_len
    report = perplexity(model, corpus, seq_len, args.stride or seq_len)
    _emit({"command": "eval", **report.to_json()})


def cmd_spectrum(args) -> None:
    model = load_checkpoint(args.model)
    if model.config.norm_kind == LAYERNORM:
        model = convert_to_rmsnorm(model)
    corpus = read_corpus(args.corpus, args.corpus_format)
    seq_len = args.cal_seqlen or model.config.max_seq_len
    sequences = _calibration_sequences(corpus, args.cal_count, seq_len, args.seed)
    _, stats = calibrate(model, sequences)
    export_spectrum(stats, args.out)
    _emit({"command": "spectrum", "out": str(args.out), "boundaries": len(stats)})


def cmd_bench(args) -> None:
    config = ModelConfig.create(
        vocab_size=1,
        embed_dim=args.dim,
        n_layers=1,
        n_heads=args.heads,
        ffn_hidden=args.ffn_hidden or 4 * args.dim,
        ffn_kind=args.ffn_kind,
        norm_kind="rmsnorm",
        pos_kind="none",
        max_seq_len=args.seq,
        precision="single",
    )
    fractions = [float(x) for x in args.fractions.split(",")]
    rows = bench_layer_matmuls(config, fractions, reps=args.reps, seq_len=args.seq, warmup=args.warmup)
    write_bench_csv(rows, args.out)
    _emit({"command": "bench", "out": str(args.out), "rows": len(rows)})


def _add_common(p, corpus=False):
    p.add_argument("--model", required=True, help="input checkpoint path")
    if corpus:
        p.add_argument("--corpus", required=True, help="calibration/evaluation corpus")
        p.add_argument(
            "--corpus-format",
            choices=["auto", "bytes", "u32"],
            default="auto",
            help="bytes: UTF-8 text, byte-level ids; u32: little-endian token ids",
        )
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slicekit", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="fold LayerNorm into adjacent weights (RMSNorm form)")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("slice", help="calibrate, rotate and slice a model")
    _add_common(p, corpus=True)
    p.add_argument("--out", required=True)
    p.add_argument("--slice-fraction", type=float, default=None)
    p.add_argument("--slice-dims", type=str, default=None, help="comma-separated per-boundary dims")
    p.add_argument("--variance-discard", type=float, default=None)
    p.add_argument("--round-to", type=int, default=1)
    p.add_argument("--cal-count", type=int, default=128)
    p.add_argument("--cal-seqlen", type=int, default=None, help="default: model max_seq_len")
    p.add_argument("--report", type=str, default=None, help="JSON slicing report path")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("verify", help="max logit divergence between two checkpoints")
    p.add_argument("a_ckpt")
    p.add_argument("b_ckpt")
    p.add_argument("--sequences", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=1e-3)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="windowed perplexity on a corpus")
    _add_common(p, corpus=True)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrum", help="export per-boundary eigenspectra as CSV")
    _add_common(p, corpus=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cal-count", type=int, default=16)
    p.add_argument("--cal-seqlen", type=int, default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("bench", help="time per-layer matmuls at several slice fractions")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=2048)
    p.add_argument("--heads", type=int, default=16)
    p.add_argument("--ffn-hidden", type=int, default=None)
    p.add_argument("--ffn-kind", choices=["mlp", "gated"], default="mlp")
    p.add_argument("--seq", type=int, default=2048)
    p.add_argument("--fractions", type=str, default="0.0,0.25,0.5")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=10)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad arguments already
        raise e
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except errors.CheckpointError as e:
        log.error("checkpoint error: %s", e)
        return EXIT_CHECKPOINT
    except _STATE_ERRORS as e:
        log.error("shape/state error: %s", e)
        return EXIT_SHAPE_STATE
    except _NUMERIC_ERRORS as e:
        log.error("numeric error: %s", e)
        return EXIT_NUMERIC
    except FileNotFoundError as e:
        log.error("%s", e)
        return EXIT_BAD_ARGS
    return 0


if __name__ == "__main__":
    sys.exit(main())
