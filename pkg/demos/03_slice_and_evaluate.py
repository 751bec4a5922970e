"""Calibrate, slice at several fractions, and watch perplexity degrade gracefully.

Uses a random model and a synthetic corpus: calibration accumulates
per-boundary second-moment matrices, PCA gives each boundary a basis, and
slicing keeps only the leading principal directions.  Smaller retained
dimensions shrink every weight matrix and raise perplexity.
"""

import numpy as np

from slicekit import (
    ModelConfig,
    SliceSpec,
    calibrate,
    choose_dims,
    perplexity,
    random_model,
    slice_model,
)

config = ModelConfig.create(
    vocab_size=64,
    embed_dim=32,
    n_layers=2,
    n_heads=4,
    ffn_hidden=48,
    ffn_kind="mlp",
    norm_kind="rmsnorm",
    pos_kind="learned_absolute",
    max_seq_len=32,
    precision="double",
)
model = random_model(config, seed=3)

rng = np.random.default_rng(0)
corpus = rng.integers(0, config.vocab_size, size=4096)
calibration = [corpus[i : i + 32] for i in range(0, 4096 - 32, 32)][:64]

rotations, stats = calibrate(model, calibration)
print("top eigenvalues at boundary 0:", np.round(stats[0].spectrum[:6], 3))

dense = perplexity(model, corpus, seq_len=32)
print(f"\n{'fraction':>8} {'dims':>6} {'perplexity':>12} {'vs dense':>9}")
print(f"{0.0:8.2f} {config.embed_dim:6d} {dense.perplexity:12.3f} {1.0:9.3f}")
for fraction in (0.125, 0.25, 0.5):
    dims = choose_dims(stats, SliceSpec.constant(fraction), config.embed_dim)
    sliced = slice_model(model, rotations, dims)
    rep = perplexity(sliced, corpus, seq_len=32)
    print(f"{fraction:8.2f} {dims[0]:6d} {rep.perplexity:12.3f} {rep.perplexity / dense.perplexity:9.3f}")
