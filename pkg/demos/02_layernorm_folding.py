"""Folding LayerNorm parameters into adjacent weights preserves outputs.

Starts from a model with full LayerNorm (per-feature scale and offset),
absorbs the scales, offsets and mean subtractions into the surrounding
linear layers and residual adapters, and verifies the resulting
RMSNorm-only model produces the same logits.
"""

import numpy as np

from slicekit import ModelConfig, convert_to_rmsnorm, max_logit_divergence, random_model

config = ModelConfig.create(
    vocab_size=100,
    embed_dim=32,
    n_layers=2,
    n_heads=4,
    ffn_hidden=48,
    ffn_kind="mlp",
    norm_kind="layernorm",
    pos_kind="learned_absolute",
    max_seq_len=64,
    precision="double",
)
model = random_model(config, seed=2)
converted = convert_to_rmsnorm(model)

rng = np.random.default_rng(0)
sequences = [rng.integers(0, config.vocab_size, size=48) for _ in range(16)]
divergence = max_logit_divergence(model, converted, sequences)

print(f"norm kinds after conversion: {sorted({p.kind for p in converted.norms})}")
print(f"residual adapters added    : {len(converted.residual_adapters)}")
print(f"max logit difference after folding: {divergence:.3e}")
