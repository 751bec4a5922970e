"""Minimal decoder-only transformer: parameters, normalisation, forward pass.

The forward pass interleaves attention and FFN blocks with a normalisation
applied to the residual stream after every block.  Models exist in three
states (layernorm, rmsnorm, rotated-sliced); the same forward code runs all
three, with optional per-block residual adapters reconciling differing bases.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateInputError,
    ShapeError,
    StateError,
    VocabularyError,
)
from .linalg import mean_subtraction_matrix

LAYERNORM = "layernorm"
RMSNORM = "rmsnorm"
IDENTITY = "identity"

_DTYPES = {"single": np.float32, "double": np.float64}


def dtype_of(precision: str) -> np.dtype:
    try:
        return np.dtype(_DTYPES[precision])
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}") from None


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int
    n_layers: int
    n_heads: int
    head_dim: int
    ffn_hidden: int
    ffn_kind: str  # "mlp" | "gated"
    norm_kind: str  # "layernorm" | "rmsnorm"
    pos_kind: str  # "learned_absolute" | "none"
    max_seq_len: int
    precision: str  # "single" | "double"
    activation: Optional[str] = None  # default: gelu_tanh for mlp, silu for gated

    @classmethod
    def create(cls, **kwargs) -> "ModelConfig":
        d = kwargs["embed_dim"]
        h = kwargs["n_heads"]
        if d % h != 0:
            raise ShapeError(f"embed_dim {d} not divisible by n_heads {h}")
        kwargs.setdefault("head_dim", d // h)
        return cls(**kwargs)

    @property
    def n_blocks(self) -> int:
        return 2 * self.n_layers

    @property
    def n_boundaries(self) -> int:
        # one boundary per block input plus one feeding the head
        return self.n_blocks + 1

    @property
    def dtype(self) -> np.dtype:
        return dtype_of(self.precision)

    def activation_name(self) -> str:
        if self.activation is not None:
            return self.activation
        return "silu" if self.ffn_kind == "gated" else "gelu_tanh"

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "head_dim": self.head_dim,
            "ffn_hidden": self.ffn_hidden,
            "ffn_kind": self.ffn_kind,
            "norm_kind": self.norm_kind,
            "pos_kind": self.pos_kind,
            "max_seq_len": self.max_seq_len,
            "precision": self.precision,
            "activation": self.activation,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass
class NormParams:
    kind: str  # "layernorm" | "rmsnorm" | "identity"
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == LAYERNORM and self.alpha is None:
            raise StateError("layernorm requires an alpha vector")
        if self.kind in (RMSNORM, IDENTITY) and (self.alpha is not None or self.beta is not None):
            raise StateError(f"{self.kind} norm carries no parameters")


@dataclass
class BlockWeights:
    kind: str  # "attention" | "ffn"
    w_in: np.ndarray
    b_in: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray


@dataclass
class TransformerModel:
    config: ModelConfig
    w_embd: np.ndarray
    w_pos: Optional[np.ndarray]
    norms: list  # NormParams, length n_blocks + 1
    blocks: list  # BlockWeights, [attn, ffn, attn, ffn, ...]
    w_head: np.ndarray
    b_head: np.ndarray
    sliced_dims: Optional[list] = None
    residual_adapters: Optional[list] = None

    @property
    def is_sliced(self) -> bool:
        return self.sliced_dims is not None

    def boundary_dims(self) -> list:
        if self.sliced_dims is not None:
            return list(self.sliced_dims)
        return [self.config.embed_dim] * self.config.n_boundaries

    def validate(self) -> None:
        cfg = self.config
        if len(self.norms) != cfg.n_boundaries:
            raise StateError(f"expected {cfg.n_boundaries} norms, found {len(self.norms)}")
        if len(self.blocks) != cfg.n_blocks:
            raise StateError(f"expected {cfg.n_blocks} blocks, found {len(self.blocks)}")
        dims = self.boundary_dims()
        if self.sliced_dims is not None:
            if self.residual_adapters is None or len(self.residual_adapters) != cfg.n_blocks:
                raise StateError("sliced model must carry one residual adapter per block")
        if self.w_embd.shape != (cfg.vocab_size, dims[0]):
            raise StateError(f"embedding shape {self.w_embd.shape} != {(cfg.vocab_size, dims[0])}")
        if self.w_head.shape != (dims[-1], cfg.vocab_size):
            raise StateError(f"head shape {self.w_head.shape} != {(dims[-1], cfg.vocab_size)}")
        inner = 3 * cfg.n_heads * cfg.head_dim
        ffn_inner = 2 * cfg.ffn_hidden if cfg.ffn_kind == "gated" else cfg.ffn_hidden
        for k, blk in enumerate(self.blocks):
            want_in = inner if blk.kind == "attention" else ffn_inner
            want_out = cfg.n_heads * cfg.head_dim if blk.kind == "attention" else cfg.ffn_hidden
            if blk.w_in.shape != (dims[k], want_in):
                raise StateError(f"block {k} w_in shape {blk.w_in.shape} != {(dims[k], want_in)}")
            if blk.w_out.shape != (want_out, dims[k + 1]):
                raise StateError(f"block {k} w_out shape {blk.w_out.shape} != {(want_out, dims[k + 1])}")
            if self.residual_adapters is not None:
                a = self.residual_adapters[k]
                if a.shape != (dims[k], dims[k + 1]):
                    raise StateError(f"adapter {k} shape {a.shape} != {(dims[k], dims[k + 1])}")


def rmsnorm_rows(x: np.ndarray) -> np.ndarray:
    """Divide each row by its Euclidean norm (computed in double)."""
    xd = x.astype(np.float64, copy=False)
    norms = np.linalg.norm(xd, axis=1)
    bad = np.nonzero(norms <= 1e-30)[0]
    if bad.size:
        raise DegenerateInputError(f"zero-norm row at index {int(bad[0])}")
    return (xd / norms[:, None]).astype(x.dtype)


def layernorm_rows(x: np.ndarray, p: NormParams, d: int) -> np.ndarray:
    """LayerNorm(X) = RMSNorm(X M) diag(alpha) sqrt(d) + 1 beta^T."""
    if p.kind != LAYERNORM:
        raise StateError(f"layernorm_rows called with {p.kind} params")
    if x.shape[1] != d:
        raise ShapeError(f"input has {x.shape[1]} columns, expected {d}")
    m = mean_subtraction_matrix(d)
    y = rmsnorm_rows(x.astype(np.float64, copy=False) @ m)
    y = y * (p.alpha.astype(np.float64) * np.sqrt(d))
    if p.beta is not None:
        y = y + p.beta.astype(np.float64)
    return y.astype(x.dtype)


def apply_norm(x: np.ndarray, p: NormParams, d: int) -> np.ndarray:
    if p.kind == IDENTITY:
        return x
    if p.kind == RMSNORM:
        return rmsnorm_rows(x)
    return layernorm_rows(x, p, d)


def gelu_tanh(x: np.ndarray) -> np.ndarray:
    c = 0.7978845608028654  # sqrt(2/pi)
    x3 = x * x * x
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x3)))


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


_ACTIVATIONS = {"gelu_tanh": gelu_tanh, "silu": silu, "relu": relu}


def causal_softmax(scores: np.ndarray) -> np.ndarray:
    """Row softmax over the causal prefix, with row-max subtraction."""
    n = scores.shape[-1]
    mask = np.tril(np.ones((n, n), dtype=bool))
    s = np.where(mask, scores, -np.inf)
    s = s - np.max(s, axis=-1, keepdims=True)
    e = np.exp(s)
    return e / np.sum(e, axis=-1, keepdims=True)


def multi_head_attention(x_proj: np.ndarray, config: ModelConfig, causal: bool = True) -> np.ndarray:
    """Attention nonlinearity on the concatenated K,Q,V projection (in that order)."""
    h, hd = config.n_heads, config.head_dim
    if x_proj.shape[1] != 3 * h * hd:
        raise ShapeError(f"projection has {x_proj.shape[1]} columns, expected {3 * h * hd}")
    n = x_proj.shape[0]
    if n > config.max_seq_len:
        raise ShapeError(f"sequence length {n} exceeds max_seq_len {config.max_seq_len}")
    k, q, v = np.split(x_proj, 3, axis=1)
    # (H, N, head_dim)
    k = k.reshape(n, h, hd).transpose(1, 0, 2)
    q = q.reshape(n, h, hd).transpose(1, 0, 2)
    v = v.reshape(n, h, hd).transpose(1, 0, 2)
    scores = (q @ k.transpose(0, 2, 1)) / np.asarray(np.sqrt(hd), dtype=x_proj.dtype)
    if causal:
        attn = causal_softmax(scores)
    else:
        s = scores - np.max(scores, axis=-1, keepdims=True)
        e = np.exp(s)
        attn = e / np.sum(e, axis=-1, keepdims=True)
    out = attn @ v  # (H, N, head_dim)
    return out.transpose(1, 0, 2).reshape(n, h * hd).astype(x_proj.dtype)


def block_nonlinearity(blk: BlockWeights, proj: np.ndarray, config: ModelConfig) -> np.ndarray:
    if blk.kind == "attention":
        return multi_head_attention(proj, config, causal=True)
    act = _ACTIVATIONS[config.activation_name()]
    if config.ffn_kind == "gated":
        up, gate = np.split(proj, 2, axis=1)
        return (act(up) * gate).astype(proj.dtype)
    return act(proj).astype(proj.dtype)


def _run(model: TransformerModel, tokens: Sequence[int], upto_boundary: Optional[int] = None):
    """Forward pass; if upto_boundary is given, return that post-norm signal."""
    cfg = model.config
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ShapeError("tokens must be a non-empty 1-D sequence")
    if ids.size > cfg.max_seq_len:
        raise ShapeError(f"sequence length {ids.size} exceeds max_seq_len {cfg.max_seq_len}")
    if np.any(ids < 0) or np.any(ids >= cfg.vocab_size):
        raise VocabularyError(f"token id out of range for vocab size {cfg.vocab_size}")
    model.validate()

    x = model.w_embd[ids]
    if model.w_pos is not None:
        x = x + model.w_pos[: ids.size]
    x = apply_norm(x, model.norms[0], cfg.embed_dim)
    if upto_boundary == 0:
        return x
    adapters = model.residual_adapters
    for k, blk in enumerate(model.blocks):
        proj = x @ blk.w_in + blk.b_in
        z = block_nonlinearity(blk, proj, cfg) @ blk.w_out + blk.b_out
        res = x @ adapters[k] if adapters is not None else x
        x = apply_norm(res + z, model.norms[k + 1], cfg.embed_dim)
        if upto_boundary == k + 1:
            return x
    if upto_boundary is not None:
        raise ShapeError(f"boundary index {upto_boundary} out of range")
    logits = x @ model.w_head + model.b_head
    if not np.all(np.isfinite(logits)):
        raise DegenerateInputError("forward pass produced non-finite logits")
    return logits


def forward(model: TransformerModel, tokens: Sequence[int]) -> np.ndarray:
    """Logits (N x V) for a token sequence."""
    return _run(model, tokens)


def boundary_signal(model: TransformerModel, tokens: Sequence[int], boundary: int) -> np.ndarray:
    """Post-norm signal entering block `boundary` (or the head for the last index)."""
    return _run(model, tokens, upto_boundary=boundary)


def _norm_params_for(cfg: ModelConfig, rng: np.random.Generator) -> NormParams:
    d = cfg.embed_dim
    if cfg.norm_kind == RMSNORM:
        return NormParams(kind=RMSNORM)
    alpha = (rng.uniform(0.5, 1.5, size=d) / np.sqrt(d)).astype(cfg.dtype)
    beta = (0.05 * rng.standard_normal(d)).astype(cfg.dtype)
    return NormParams(kind=LAYERNORM, alpha=alpha, beta=beta)


def random_model(config: ModelConfig, seed: int) -> TransformerModel:
    """Seeded random model, used as a test/demo fixture."""
    rng = np.random.default_rng(seed)
    cfg = config
    dt = cfg.dtype
    d = cfg.embed_dim
    attn_inner = 3 * cfg.n_heads * cfg.head_dim
    ffn_inner = 2 * cfg.ffn_hidden if cfg.ffn_kind == "gated" else cfg.ffn_hidden

    w_embd = rng.standard_normal((cfg.vocab_size, d)).astype(dt)
    w_pos = None
    if cfg.pos_kind == "learned_absolute":
        w_pos = (0.1 * rng.standard_normal((cfg.max_seq_len, d))).astype(dt)

    norms = [_norm_params_for(cfg, rng) for _ in range(cfg.n_boundaries)]
    blocks = []
    for k in range(cfg.n_blocks):
        kind = "attention" if k % 2 == 0 else "ffn"
        inner = attn_inner if kind == "attention" else ffn_inner
        inner_out = cfg.n_heads * cfg.head_dim if kind == "attention" else cfg.ffn_hidden
        blocks.append(
            BlockWeights(
                kind=kind,
                w_in=(rng.standard_normal((d, inner)) / np.sqrt(d)).astype(dt),
                b_in=(0.01 * rng.standard_normal(inner)).astype(dt),
                w_out=(rng.standard_normal((inner_out, d)) / np.sqrt(inner_out)).astype(dt),
                b_out=(0.01 * rng.standard_normal(d)).astype(dt),
            )
        )
    w_head = (rng.standard_normal((d, cfg.vocab_size)) / np.sqrt(d)).astype(dt)
    b_head = (0.01 * rng.standard_normal(cfg.vocab_size)).astype(dt)
    m = TransformerModel(
        config=cfg,
        w_embd=w_embd,
        w_pos=w_pos,
        norms=norms,
        blocks=blocks,
        w_head=w_head,
        b_head=b_head,
    )
    m.validate()
    return m


def models_equal(a: TransformerModel, b: TransformerModel) -> bool:
    """Element-for-element equality, including config and metadata."""
    if a.config != b.config or a.sliced_dims != b.sliced_dims:
        return False

    def eq(x, y):
        if x is None or y is None:
            return x is None and y is None
        return x.dtype == y.dtype and x.shape == y.shape and np.array_equal(x, y)

    if not (eq(a.w_embd, b.w_embd) and eq(a.w_pos, b.w_pos) and eq(a.w_head, b.w_head) and eq(a.b_head, b.b_head)):
        return False
    for na, nb in zip(a.norms, b.norms):
        if na.kind != nb.kind or not (eq(na.alpha, nb.alpha) and eq(na.beta, nb.beta)):
            return False
    for ba, bb in zip(a.blocks, b.blocks):
        if ba.kind != bb.kind:
            return False
        if not (eq(ba.w_in, bb.w_in) and eq(ba.b_in, bb.b_in) and eq(ba.w_out, bb.w_out) and eq(ba.b_out, bb.b_out)):
            return False
    if (a.residual_adapters is None) != (b.residual_adapters is None):
        return False
    if a.residual_adapters is not None:
        for aa, ab in zip(a.residual_adapters, b.residual_adapters):
            if not eq(aa, ab):
                return False
    return True
