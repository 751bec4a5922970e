"""Output-preserving model transformations.

Two transformations live here: absorbing LayerNorm scale/offset/mean-
subtraction into adjacent linear layers (yielding a pure-RMSNorm model),
and rotating every block into a new orthogonal basis with per-block
residual adapters reconciling neighbouring bases.
"""

import copy
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidRotationError, ShapeError, StateError
from .linalg import mean_subtraction_matrix
from .model import (
    IDENTITY,
    LAYERNORM,
    RMSNORM,
    ModelConfig,
    NormParams,
    TransformerModel,
    forward,
)


@dataclass
class RotationSet:
    """One orthogonal basis per block boundary, plus the head boundary."""

    qs: list  # length n_blocks + 1, each D x D
    dims: list  # retained dimension per basis

    @classmethod
    def identity(cls, config: ModelConfig) -> "RotationSet":
        d = config.embed_dim
        return cls(qs=[np.eye(d) for _ in range(config.n_boundaries)], dims=[d] * config.n_boundaries)

    def validate(self, config: ModelConfig) -> None:
        if len(self.qs) != config.n_boundaries:
            raise ShapeError(f"expected {config.n_boundaries} rotations, got {len(self.qs)}")
        if len(self.dims) != len(self.qs):
            raise ShapeError("dims and qs length mismatch")
        d = config.embed_dim
        for i, q in enumerate(self.qs):
            if q.shape != (d, d):
                raise ShapeError(f"rotation {i} has shape {q.shape}, expected {(d, d)}")
            qd = q.astype(np.float64, copy=False)
            err = np.max(np.abs(qd.T @ qd - np.eye(d)))
            if err > 1e-6:
                raise InvalidRotationError(f"rotation {i} is not orthogonal (max deviation {err:.3e})")
        for i, dim in enumerate(self.dims):
            if not (1 <= dim <= d):
                raise ShapeError(f"retained dim {dim} at boundary {i} outside [1, {d}]")


def _as64(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float64, copy=False)


def convert_to_rmsnorm(m: TransformerModel) -> TransformerModel:
    """Fold every LayerNorm into the surrounding linear layers.

    The scale diag(alpha)*sqrt(D) of each norm moves into the next block's
    input weights (and the head), its offset beta into the next block's
    input bias and the producing side of the following boundary, and the
    mean subtraction M into everything feeding the residual stream.  The
    residual path itself picks up a per-block adapter diag(alpha)*sqrt(D)*M
    so the folded network reproduces the original outputs exactly.
    """
    if m.config.norm_kind != LAYERNORM:
        raise StateError("model is already in rmsnorm form")
    if m.is_sliced:
        raise StateError("cannot convert a sliced model")
    m.validate()

    cfg = m.config
    d = cfg.embed_dim
    sqrt_d = np.sqrt(float(d))
    msub = mean_subtraction_matrix(d)
    dt = cfg.dtype

    def scale_of(p: NormParams) -> Optional[np.ndarray]:
        # column scaling applied by the norm on its output; None means identity
        if p.kind == LAYERNORM:
            return _as64(p.alpha) * sqrt_d
        return None

    def beta_of(p: NormParams) -> Optional[np.ndarray]:
        if p.kind == LAYERNORM and p.beta is not None:
            return _as64(p.beta)
        return None

    out = copy.deepcopy(m)

    # embedding side: the first norm's mean subtraction applies to its input
    if m.norms[0].kind == LAYERNORM:
        out.w_embd = (_as64(m.w_embd) @ msub).astype(dt)
        if m.w_pos is not None:
            out.w_pos = (_as64(m.w_pos) @ msub).astype(dt)

    adapters = []
    for k, blk in enumerate(m.blocks):
        prev = m.norms[k]
        here = m.norms[k + 1]
        s_prev = scale_of(prev)
        b_prev = beta_of(prev)
        m_here = msub if here.kind == LAYERNORM else None

        w_in = _as64(blk.w_in)
        b_in = _as64(blk.b_in)
        if b_prev is not None:
            b_in = b_in + w_in.T @ b_prev
        if s_prev is not None:
            w_in = s_prev[:, None] * w_in

        w_out = _as64(blk.w_out)
        b_out = _as64(blk.b_out)
        if b_prev is not None:
            b_out = b_out + b_prev
        if m_here is not None:
            w_out = w_out @ m_here
            b_out = m_here @ b_out

        adapter = np.diag(s_prev) if s_prev is not None else np.eye(d)
        if m_here is not None:
            adapter = adapter @ m_here

        out.blocks[k].w_in = w_in.astype(dt)
        out.blocks[k].b_in = b_in.astype(dt)
        out.blocks[k].w_out = w_out.astype(dt)
        out.blocks[k].b_out = b_out.astype(dt)
        adapters.append(adapter.astype(dt))

    last = m.norms[-1]
    s_last = scale_of(last)
    b_last = beta_of(last)
    w_head = _as64(m.w_head)
    b_head = _as64(m.b_head)
    if b_last is not None:
        b_head = b_head + w_head.T @ b_last
    if s_last is not None:
        w_head = s_last[:, None] * w_head
    out.w_head = w_head.astype(dt)
    out.b_head = b_head.astype(dt)

    out.norms = [
        NormParams(kind=IDENTITY if p.kind == IDENTITY else RMSNORM) for p in m.norms
    ]
    out.residual_adapters = adapters
    out.config = ModelConfig(**{**cfg.to_json(), "norm_kind": RMSNORM})
    out.validate()
    return out


def apply_rotation(m: TransformerModel, r: RotationSet) -> TransformerModel:
    """Rotate every boundary basis; outputs are preserved exactly.

    Embedding tables are post-multiplied by the first basis, each block's
    input weights pre-multiplied by its boundary's transpose, outputs and
    output biases rotated into the next boundary's basis, and the head
    pre-multiplied by the last basis transpose.  Residual adapters become
    Q_k^T (A_k) Q_{k+1}.
    """
    if m.config.norm_kind != RMSNORM:
        raise StateError("rotation requires an rmsnorm-form model")
    if m.is_sliced:
        raise StateError("cannot rotate an already-sliced model")
    m.validate()
    r.validate(m.config)
    d = m.config.embed_dim
    if any(dim != d for dim in r.dims):
        raise ShapeError("apply_rotation requires full-dimension bases; use slice_model to cut")

    dt = m.config.dtype
    qs = [_as64(q) for q in r.qs]
    out = copy.deepcopy(m)
    out.w_embd = (_as64(m.w_embd) @ qs[0]).astype(dt)
    if m.w_pos is not None:
        out.w_pos = (_as64(m.w_pos) @ qs[0]).astype(dt)
    adapters = []
    for k, blk in enumerate(m.blocks):
        out.blocks[k].w_in = (qs[k].T @ _as64(blk.w_in)).astype(dt)
        out.blocks[k].w_out = (_as64(blk.w_out) @ qs[k + 1]).astype(dt)
        out.blocks[k].b_out = (qs[k + 1].T @ _as64(blk.b_out)).astype(dt)
        a_old = _as64(m.residual_adapters[k]) if m.residual_adapters is not None else None
        mid = a_old if a_old is not None else np.eye(d)
        adapters.append((qs[k].T @ mid @ qs[k + 1]).astype(dt))
    out.w_head = (qs[-1].T @ _as64(m.w_head)).astype(dt)
    out.residual_adapters = adapters
    out.validate()
    return out


def max_logit_divergence(a: TransformerModel, b: TransformerModel, sequences: Sequence[Sequence[int]]) -> float:
    """Max absolute logit difference between two models over token sequences."""
    if a.config.vocab_size != b.config.vocab_size:
        raise ShapeError("models have different vocabularies")
    if a.config.max_seq_len != b.config.max_seq_len:
        raise ShapeError("models have different max sequence lengths")
    worst = 0.0
    for seq in sequences:
        la = _as64(forward(a, seq))
        lb = _as64(forward(b, seq))
        worst = max(worst, float(np.max(np.abs(la - lb))))
    return worst
