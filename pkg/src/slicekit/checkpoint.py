"""Single-file checkpoint container.

Layout (little-endian): bytes 0-7 hold an unsigned 64-bit header length n,
bytes 8..8+n hold a UTF-8 JSON object mapping tensor name -> {dtype, shape,
data_offsets}, plus a "__metadata__" entry with the model config, sliced
dims, per-boundary norm kinds and a format version.  The remainder is the
concatenation of row-major tensor payloads; offsets are relative to the
first byte after the header.
"""

import json
import struct
from typing import Optional

import numpy as np

from .errors import (
    DtypeMismatchError,
    MalformedHeaderError,
    MissingTensorError,
    TruncatedPayloadError,
    UnknownTensorError,
)
from .model import ModelConfig, NormParams, BlockWeights, TransformerModel, LAYERNORM

FORMAT_VERSION = "1"

_DTYPE_TAGS = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_TAG_OF = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def _tensor_map(model: TransformerModel) -> dict:
    t = {"embd.token": model.w_embd, "head.w": model.w_head, "head.b": model.b_head}
    if model.w_pos is not None:
        t["embd.pos"] = model.w_pos
    for k, p in enumerate(model.norms):
        if p.alpha is not None:
            t[f"norm.{k}.alpha"] = p.alpha
        if p.beta is not None:
            t[f"norm.{k}.beta"] = p.beta
    for k, blk in enumerate(model.blocks):
        t[f"block.{k}.w_in"] = blk.w_in
        t[f"block.{k}.b_in"] = blk.b_in
        t[f"block.{k}.w_out"] = blk.w_out
        t[f"block.{k}.b_out"] = blk.b_out
    if model.residual_adapters is not None:
        for k, a in enumerate(model.residual_adapters):
            t[f"adapter.{k}"] = a
    return t


def save_checkpoint(model: TransformerModel, path) -> None:
    model.validate()
    tensors = _tensor_map(model)
    header: dict = {
        "__metadata__": {
            "format_version": FORMAT_VERSION,
            "config": model.config.to_json(),
            "sliced_dims": model.sliced_dims,
            "norm_kinds": [p.kind for p in model.norms],
        }
    }
    offset = 0
    order = sorted(tensors)
    for name in order:
        arr = np.ascontiguousarray(tensors[name])
        nbytes = arr.nbytes
        header[name] = {
            "dtype": _TAG_OF[np.dtype(arr.dtype)],
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + nbytes],
        }
        offset += nbytes
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name in order:
            arr = np.ascontiguousarray(tensors[name])
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def _expected_names(config: ModelConfig, norm_kinds, sliced: bool, has_pos: bool):
    """Return (required, allowed) tensor name sets for a checkpoint."""
    names = {"embd.token", "head.w", "head.b"}
    if has_pos:
        names.add("embd.pos")
    for k, kind in enumerate(norm_kinds):
        if kind == LAYERNORM:
            names.add(f"norm.{k}.alpha")
            names.add(f"norm.{k}.beta")
    for k in range(config.n_blocks):
        names |= {f"block.{k}.w_in", f"block.{k}.b_in", f"block.{k}.w_out", f"block.{k}.b_out"}
    adapters = {f"adapter.{k}" for k in range(config.n_blocks)}
    required = names | adapters if sliced else names
    # unsliced rmsnorm models may still carry adapters (e.g. fresh from conversion)
    return required, names | adapters


def load_checkpoint(path) -> TransformerModel:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise MalformedHeaderError("file too short for a header length field")
    (hlen,) = struct.unpack("<Q", raw[:8])
    if 8 + hlen > len(raw):
        raise MalformedHeaderError(f"declared header length {hlen} exceeds file size")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedHeaderError(f"header is not valid JSON: {e}") from None
    if not isinstance(header, dict) or "__metadata__" not in header:
        raise MalformedHeaderError("header lacks a __metadata__ entry")
    meta = header.pop("__metadata__")
    try:
        config = ModelConfig.from_json(meta["config"])
        sliced_dims = meta["sliced_dims"]
        norm_kinds = meta["norm_kinds"]
    except (KeyError, TypeError) as e:
        raise MalformedHeaderError(f"metadata incomplete: {e}") from None

    payload = raw[8 + hlen :]
    required, allowed = _expected_names(config, norm_kinds, sliced_dims is not None, "embd.pos" in header)
    for name in header:
        if name not in allowed:
            raise UnknownTensorError(f"unexpected tensor {name!r}")
    for name in required:
        if name not in header:
            raise MissingTensorError(f"checkpoint is missing tensor {name!r}")
    present_adapters = [n for n in header if n.startswith("adapter.")]
    if present_adapters and len(present_adapters) != config.n_blocks:
        raise MissingTensorError("checkpoint carries a partial residual adapter set")

    model_tag = {"single": "f32", "double": "f64"}[config.precision]

    def read(name: str) -> np.ndarray:
        entry = header[name]
        try:
            tag, shape, (begin, end) = entry["dtype"], entry["shape"], entry["data_offsets"]
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedHeaderError(f"bad entry for {name!r}: {e}") from None
        if tag not in _DTYPE_TAGS:
            raise DtypeMismatchError(f"tensor {name!r} has unsupported dtype {tag!r}")
        if tag != model_tag:
            raise DtypeMismatchError(
                f"tensor {name!r} is {tag} but model precision {config.precision} requires {model_tag}"
            )
        dt = _DTYPE_TAGS[tag]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if begin < 0 or end < begin:
            raise MalformedHeaderError(f"tensor {name!r} has invalid offsets [{begin}, {end})")
        if end - begin != count * dt.itemsize:
            raise MalformedHeaderError(f"tensor {name!r} byte span does not match its shape")
        if end > len(payload):
            raise TruncatedPayloadError(
                f"tensor {name!r} ends at byte {end} but payload is {len(payload)} bytes"
            )
        arr = np.frombuffer(payload[begin:end], dtype=dt).reshape(shape)
        return np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("="), copy=False)

    w_pos = read("embd.pos") if "embd.pos" in header else None
    norms = []
    for k, kind in enumerate(norm_kinds):
        alpha = read(f"norm.{k}.alpha") if f"norm.{k}.alpha" in header else None
        beta = read(f"norm.{k}.beta") if f"norm.{k}.beta" in header else None
        norms.append(NormParams(kind=kind, alpha=alpha, beta=beta))
    blocks = []
    for k in range(config.n_blocks):
        blocks.append(
            BlockWeights(
                kind="attention" if k % 2 == 0 else "ffn",
                w_in=read(f"block.{k}.w_in"),
                b_in=read(f"block.{k}.b_in"),
                w_out=read(f"block.{k}.w_out"),
                b_out=read(f"block.{k}.b_out"),
            )
        )
    adapters: Optional[list] = None
    if present_adapters:
        adapters = [read(f"adapter.{k}") for k in range(config.n_blocks)]
    model = TransformerModel(
        config=config,
        w_embd=read("embd.token"),
        w_pos=w_pos,
        norms=norms,
        blocks=blocks,
        w_head=read("head.w"),
        b_head=read("head.b"),
        sliced_dims=list(sliced_dims) if sliced_dims is not None else None,
        residual_adapters=adapters,
    )
    model.validate()
    return model
