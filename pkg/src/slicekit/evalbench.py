"""Perplexity evaluation, eigenspectrum export and matmul timing.

The timing harness measures the dense matrix multiplications of one
transformer layer at several slice fractions and reports median runtimes,
since slicing only changes matmul shapes.
"""

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CalibrationError, InvalidSpecError, ShapeError
from .model import ModelConfig, TransformerModel, forward

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def worker_threads() -> int:
    """Worker thread cap from the SLICER_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("SLICER_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class PerplexityReport:
    n_tokens: int
    mean_nll: float
    perplexity: float

    def to_json(self) -> dict:
        return {"n_tokens": self.n_tokens, "mean_nll": self.mean_nll, "perplexity": self.perplexity}


@dataclass(frozen=True)
class BenchRow:
    op_name: str
    shape: tuple  # (m, k, n)
    fraction: float
    median_ms: float
    speedup_vs_dense: float


def _window_plan(n_tokens: int, seq_len: int, stride: int):
    """(start, length, first_scored_offset) per window; each target scored once."""
    plan = []
    next_target = 1
    start = 0
    while start < n_tokens - 1:
        length = min(seq_len, n_tokens - 1 - start)
        first = max(0, next_target - (start + 1))
        if first < length:
            plan.append((start, length, first))
            next_target = start + length + 1
        start += stride
    return plan


def perplexity(
    m: TransformerModel, corpus: Sequence[int], seq_len: int, stride: Optional[int] = None
) -> PerplexityReport:
    """Windowed next-token perplexity; non-overlapping windows by default."""
    tokens = np.asarray(corpus, dtype=np.int64)
    if tokens.size < seq_len + 1:
        raise CalibrationError(f"corpus has {tokens.size} tokens; need at least seq_len+1 = {seq_len + 1}")
    if stride is None:
        stride = seq_len
    if not (1 <= stride <= seq_len):
        raise InvalidSpecError(f"stride must be in [1, seq_len], got {stride}")

    plan = _window_plan(tokens.size, seq_len, stride)

    def window_nll(item):
        start, length, first = item
        ctx = tokens[start : start + length]
        logits = forward(m, ctx).astype(np.float64)
        targets = tokens[start + 1 : start + length + 1]
        # stable log-softmax
        z = logits - np.max(logits, axis=1, keepdims=True)
        logp = z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))
        picked = logp[np.arange(length), targets][first:]
        return -float(np.sum(picked)), picked.size

    threads = worker_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(window_nll, plan))
    else:
        results = [window_nll(item) for item in plan]

    total_nll = sum(r[0] for r in results)
    total_count = sum(r[1] for r in results)
    mean_nll = total_nll / total_count
    return PerplexityReport(n_tokens=total_count, mean_nll=mean_nll, perplexity=float(np.exp(mean_nll)))


def export_spectrum(stats, path) -> None:
    """CSV of normalized (by maximum) eigenvalues per boundary."""
    stats = list(stats)
    if not stats:
        raise CalibrationError("no covariance stats to export")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["boundary", "index", "normalized_eigenvalue"])
        for b, st in enumerate(stats):
            lam = st.spectrum
            if lam is None:
                raise CalibrationError(f"boundary {b} has no computed spectrum")
            peak = float(lam[0])
            if peak <= 0:
                raise CalibrationError(f"boundary {b} spectrum has non-positive maximum")
            for i, v in enumerate(lam):
                w.writerow([b, i, repr(float(v) / peak)])


def layer_matmul_shapes(config: ModelConfig, seq_len: int, retained: int):
    """(op_name, m, k, n) for the per-layer dense matmuls at a retained dim."""
    d = retained
    inner = config.n_heads * config.head_dim
    ops = [
        ("attn_in_proj", seq_len, d, 3 * inner),
        ("attn_out_proj", seq_len, inner, d),
        ("ffn_up", seq_len, d, config.ffn_hidden),
    ]
    if config.ffn_kind == "gated":
        ops.append(("ffn_gate", seq_len, d, config.ffn_hidden))
    ops.append(("ffn_down", seq_len, config.ffn_hidden, d))
    return ops


def _time_matmul(m: int, k: int, n: int, reps: int, warmup: int, rng: np.random.Generator) -> float:
    a = rng.standard_normal((m, k)).astype(np.float32)
    b = rng.standard_normal((k, n)).astype(np.float32)
    out = np.empty((m, n), dtype=np.float32)
    times = []
    for i in range(warmup + reps):
        t0 = time.perf_counter()
        np.matmul(a, b, out=out)
        t1 = time.perf_counter()
        if i >= warmup:
            times.append(t1 - t0)
    return float(np.median(times) * 1e3)


def bench_layer_matmuls(
    config: ModelConfig,
    slice_fractions: Sequence[float],
    reps: int,
    seq_len: int = 2048,
    warmup: int = 10,
    single_thread: bool = True,
) -> list:
    """Median matmul runtimes per layer operation and slice fraction."""
    if reps < 10:
        raise InvalidSpecError(f"bench needs reps >= 10, got {reps}")
    if seq_len < 1 or config.embed_dim < 1:
        raise ShapeError("bench shapes must be positive")
    fractions = list(slice_fractions)
    if 0.0 not in fractions:
        fractions = [0.0] + fractions

    rng = np.random.default_rng(0)
    rows = []
    dense_ms = {}

    def run():
        for f in fractions:
            retained = max(1, int(np.floor((1.0 - f) * config.embed_dim + 0.5)))
            for op_name, m, k, n in layer_matmul_shapes(config, seq_len, retained):
                med = _time_matmul(m, k, n, reps, warmup, rng)
                if f == 0.0:
                    dense_ms[op_name] = med
                rows.append(
                    BenchRow(
                        op_name=op_name,
                        shape=(m, k, n),
                        fraction=f,
                        median_ms=med,
                        speedup_vs_dense=dense_ms[op_name] / med,
                    )
                )

    if single_thread and threadpool_limits is not None:
        with threadpool_limits(limits=1):
            run()
    else:
        run()
    return rows


def write_bench_csv(rows: Sequence[BenchRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["op", "m", "k", "n", "fraction", "median_ms", "speedup"])
        for r in rows:
            w.writerow([r.op_name, r.shape[0], r.shape[1], r.shape[2], r.fraction, r.median_ms, r.speedup_vs_dense])
