import numpy as np

from slicekit.model import ModelConfig


def make_config(
    embed_dim=16,
    n_layers=2,
    ffn_kind="mlp",
    norm_kind="rmsnorm",
    precision="double",
    vocab_size=50,
    n_heads=2,
    pos_kind="learned_absolute",
    max_seq_len=64,
    ffn_hidden=None,
):
    return ModelConfig.create(
        vocab_size=vocab_size,
        embed_dim=embed_dim,
        n_layers=n_layers,
        n_heads=n_heads,
        ffn_hidden=ffn_hidden if ffn_hidden is not None else embed_dim * 3 // 2,
        ffn_kind=ffn_kind,
        norm_kind=norm_kind,
        pos_kind=pos_kind,
        max_seq_len=max_seq_len,
        precision=precision,
    )


def token_sequences(vocab_size, count=8, length=32, seed=1234):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, vocab_size, size=length) for _ in range(count)]
