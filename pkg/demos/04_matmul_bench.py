"""Slicing shrinks dense matmul shapes; measure the runtime effect directly.

Times the per-layer matrix multiplications of a 2048-dim layer at several
slice fractions (single BLAS thread, median over repetitions) and prints
the speedup of each operation relative to the dense shapes.
"""

from slicekit import ModelConfig, bench_layer_matmuls

config = ModelConfig.create(
    vocab_size=1,
    embed_dim=2048,
    n_layers=1,
    n_heads=16,
    ffn_hidden=4096,
    ffn_kind="mlp",
    norm_kind="rmsnorm",
    pos_kind="none",
    max_seq_len=256,
    precision="single",
)

rows = bench_layer_matmuls(config, [0.25, 0.5], reps=11, seq_len=256, warmup=3)

print(f"{'op':>14} {'shape (m,k,n)':>20} {'fraction':>9} {'median ms':>10} {'speedup':>8}")
for r in rows:
    print(f"{r.op_name:>14} {str(r.shape):>20} {r.fraction:9.2f} {r.median_ms:10.3f} {r.speedup_vs_dense:8.2f}")
