"""Calibration, per-boundary PCA, slicing-level selection and the deletion step.

Calibration walks the boundaries in order: it accumulates the second-moment
matrix of the post-norm signal at each boundary (in double precision, fixed
sequence order), eigendecomposes it, installs the resulting basis, and only
then moves to the next boundary.  Slicing composes the rotation with a
truncation to the leading principal components.
"""

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CalibrationError, DegenerateInputError, InvalidSpecError, ShapeError, StateError
from .invariance import RotationSet, apply_rotation
from .linalg import eigh_descending
from .model import RMSNORM, TransformerModel, boundary_signal


@dataclass
class CovarianceStats:
    """Accumulated C = sum_i X_i^T X_i for one boundary, plus its spectrum."""

    c: np.ndarray
    n_rows: int
    spectrum: Optional[np.ndarray] = None

    def total_variance(self) -> float:
        if self.spectrum is None:
            raise StateError("spectrum not computed yet")
        return float(np.sum(self.spectrum))


@dataclass
class SliceSpec:
    """How much to cut: a constant fraction, explicit per-boundary dims, or a
    variance-discard target."""

    mode: str  # "constant_fraction" | "explicit_dims" | "variance_target"
    fraction: Optional[float] = None
    dims: Optional[list] = None
    discard: Optional[float] = None
    round_to_multiple: int = 1

    @classmethod
    def constant(cls, fraction: float, round_to_multiple: int = 1) -> "SliceSpec":
        if not (0.0 <= fraction < 1.0):
            raise InvalidSpecError(f"slice fraction must be in [0, 1), got {fraction}")
        return cls(mode="constant_fraction", fraction=fraction, round_to_multiple=round_to_multiple)

    @classmethod
    def explicit(cls, dims: Sequence[int]) -> "SliceSpec":
        return cls(mode="explicit_dims", dims=list(dims))

    @classmethod
    def variance(cls, discard: float, round_to_multiple: int = 1) -> "SliceSpec":
        if not (0.0 <= discard < 1.0):
            raise InvalidSpecError(f"variance discard must be in [0, 1), got {discard}")
        return cls(mode="variance_target", discard=discard, round_to_multiple=round_to_multiple)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _round_dim(dim: int, multiple: int, d_full: int) -> int:
    dim = max(1, dim)
    if multiple > 1:
        dim = ((dim + multiple - 1) // multiple) * multiple
    return min(dim, d_full)


def calibrate(m: TransformerModel, sequences: Sequence[Sequence[int]]):
    """Per-boundary PCA bases from calibration sequences.

    Returns (RotationSet, list[CovarianceStats]).  Boundaries are processed
    sequentially: the basis found at boundary k is installed in the working
    network before the signals for boundary k+1 are collected.
    """
    if m.config.norm_kind != RMSNORM:
        raise StateError("calibration requires an rmsnorm-form model (convert first)")
    if m.is_sliced:
        raise StateError("calibration requires an unsliced model")
    sequences = [np.asarray(s, dtype=np.int64) for s in sequences]
    if not sequences:
        raise CalibrationError("calibration set is empty")
    for i, s in enumerate(sequences):
        if s.size < 2:
            raise CalibrationError(f"calibration sequence {i} is shorter than 2 tokens")

    cfg = m.config
    d = cfg.embed_dim
    n_bounds = cfg.n_boundaries
    qs = [np.eye(d) for _ in range(n_bounds)]
    stats = []
    for bidx in range(n_bounds):
        working = apply_rotation(m, RotationSet(qs=list(qs), dims=[d] * n_bounds)) if bidx else m
        c = np.zeros((d, d), dtype=np.float64)
        n_rows = 0
        for seq in sequences:  # fixed order: deterministic accumulation
            x = boundary_signal(working, seq, bidx).astype(np.float64)
            c += x.T @ x
            n_rows += x.shape[0]
        c = 0.5 * (c + c.T)
        if not np.linalg.norm(c) > 0.0:
            raise DegenerateInputError(f"covariance at boundary {bidx} has rank < 1")
        dec = eigh_descending(c)
        min_eig, max_eig = float(dec.eigenvalues[-1]), float(dec.eigenvalues[0])
        if min_eig < -1e-8 * max(max_eig, 0.0):
            raise DegenerateInputError(f"covariance at boundary {bidx} is not positive semidefinite")
        qs[bidx] = dec.eigenvectors
        stats.append(CovarianceStats(c=c, n_rows=n_rows, spectrum=dec.eigenvalues))
    return RotationSet(qs=qs, dims=[d] * n_bounds), stats


def choose_dims(stats: Sequence[CovarianceStats], spec: SliceSpec, d_full: int) -> list:
    """Retained dimension per boundary under the given slicing policy."""
    n = len(stats)
    if spec.mode == "explicit_dims":
        dims = list(spec.dims or [])
        if len(dims) != n:
            raise InvalidSpecError(f"explicit dims has {len(dims)} entries, expected {n}")
        for dim in dims:
            if not (1 <= dim <= d_full):
                raise InvalidSpecError(f"explicit dim {dim} outside [1, {d_full}]")
        return dims
    if spec.mode == "constant_fraction":
        dim = _round_dim(_round_half_up((1.0 - spec.fraction) * d_full), spec.round_to_multiple, d_full)
        return [dim] * n
    if spec.mode == "variance_target":
        dims = []
        for st in stats:
            lam = st.spectrum
            if lam is None:
                raise StateError("variance targeting needs computed spectra")
            total = float(np.sum(lam))
            cum = np.cumsum(lam)
            need = (1.0 - spec.discard) * total
            dim = int(np.searchsorted(cum, need - 1e-12 * max(total, 1.0)) + 1)
            dims.append(_round_dim(min(dim, d_full), spec.round_to_multiple, d_full))
        return dims
    raise InvalidSpecError(f"unknown slice mode {spec.mode!r}")


def boundary_reconstruction_error(stats: CovarianceStats, d_small: int) -> float:
    """Exact squared Frobenius error of keeping the top d_small components."""
    lam = stats.spectrum
    if lam is None:
        raise StateError("spectrum not computed yet")
    if d_small > lam.size:
        raise InvalidSpecError(f"d_small {d_small} exceeds dimension {lam.size}")
    return float(np.sum(lam[d_small:]))


def slice_model(m: TransformerModel, r: RotationSet, dims: Sequence[int]) -> TransformerModel:
    """Rotate then delete: keep the first dims[k] columns of each basis."""
    cfg = m.config
    dims = [int(x) for x in dims]
    if len(dims) != cfg.n_boundaries:
        raise ShapeError(f"dims has {len(dims)} entries, expected {cfg.n_boundaries}")
    for dim in dims:
        if not (1 <= dim <= cfg.embed_dim):
            raise ShapeError(f"retained dim {dim} outside [1, {cfg.embed_dim}]")
    rotated = apply_rotation(m, r)
    out = copy.deepcopy(rotated)
    out.w_embd = np.ascontiguousarray(rotated.w_embd[:, : dims[0]])
    if rotated.w_pos is not None:
        out.w_pos = np.ascontiguousarray(rotated.w_pos[:, : dims[0]])
    for k, blk in enumerate(rotated.blocks):
        out.blocks[k].w_in = np.ascontiguousarray(blk.w_in[: dims[k], :])
        out.blocks[k].w_out = np.ascontiguousarray(blk.w_out[:, : dims[k + 1]])
        out.blocks[k].b_out = np.ascontiguousarray(blk.b_out[: dims[k + 1]])
        out.residual_adapters[k] = np.ascontiguousarray(
            rotated.residual_adapters[k][: dims[k], : dims[k + 1]]
        )
    out.w_head = np.ascontiguousarray(rotated.w_head[: dims[-1], :])
    out.sliced_dims = dims
    out.validate()
    return out


def slicing_report(stats: Sequence[CovarianceStats], dims: Sequence[int], top_k: int = 8) -> list:
    """Per-boundary JSON-friendly slicing summary."""
    rows = []
    for i, (st, dim) in enumerate(zip(stats, dims)):
        total = st.total_variance()
        rows.append(
            {
                "boundary_index": i,
                "retained_dim": int(dim),
                "total_variance": total,
                "discarded_variance": boundary_reconstruction_error(st, int(dim)),
                "top_k_eigenvalues": [float(v) for v in st.spectrum[:top_k]],
            }
        )
    return rows


def write_slicing_report(path, stats, dims, top_k: int = 8) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(slicing_report(stats, dims, top_k=top_k), f, indent=2)
        f.write("\n")
