"""Convert OPT-style post-norm decoder checkpoints into the slicekit container.

Supported sources: decoder-only models with LayerNorm applied *after* each
attention/FFN sub-layer (OPT family with ``do_layer_norm_before=False``),
learned absolute positions and an untied or embedding-tied head.  Rotary
positions and pre-norm layouts cannot be represented by the target engine
and are rejected up front.
"""

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from slicekit.checkpoint import save_checkpoint
from slicekit.model import BlockWeights, ModelConfig, NormParams, TransformerModel, forward

from .errors import (
    SelfTestError,
    ShapeMismatchError,
    UnmappedTensorError,
    UnsupportedArchitectureError,
)

# HF activation_function values expressible by the target engine
_ACTIVATION_MAP = {
    "relu": "relu",
    "silu": "silu",
    "gelu_new": "gelu_tanh",
    "gelu_pytorch_tanh": "gelu_tanh",
}

# learned-position tables in the OPT family skip the first two rows
_POSITION_OFFSET = 2

SELF_TEST_TOLERANCE = 1e-3


@dataclass(frozen=True)
class NameMapEntry:
    """One source tensor consumed into one target tensor (optionally transposed,
    sliced, or concatenated with siblings that share the target name)."""

    source: str
    target: str
    transpose: bool


class _Mapper:
    """Pulls tensors out of a source state dict, tracking consumption."""

    def __init__(self, state: dict):
        self.state = state
        self.consumed: set = set()
        self.entries: list = []
        self.shape_errors: list = []

    def take(self, source: str, target: str, transpose: bool = False, expect=None) -> np.ndarray:
        if source not in self.state:
            raise UnmappedTensorError(f"source checkpoint lacks expected tensor {source!r}")
        arr = np.asarray(self.state[source], dtype=np.float32)
        if transpose:
            arr = np.ascontiguousarray(arr.T)
        if expect is not None and arr.shape != tuple(expect):
            self.shape_errors.append(f"{source} -> {target}: shape {arr.shape}, expected {tuple(expect)}")
        self.consumed.add(source)
        self.entries.append(NameMapEntry(source=source, target=target, transpose=transpose))
        return arr

    def finish(self) -> None:
        if self.shape_errors:
            raise ShapeMismatchError("shape mismatches: " + "; ".join(self.shape_errors))
        leftover = sorted(set(self.state) - self.consumed)
        if leftover:
            raise UnmappedTensorError("unmapped source tensors: " + ", ".join(leftover))


def _check_supported(hf_config) -> None:
    if getattr(hf_config, "model_type", None) != "opt":
        raise UnsupportedArchitectureError(
            f"only OPT-family sources are supported, got model_type "
            f"{getattr(hf_config, 'model_type', None)!r}"
        )
    if getattr(hf_config, "rope_theta", None) is not None:
        raise UnsupportedArchitectureError("rotary position embeddings are not supported")
    if getattr(hf_config, "do_layer_norm_before", True):
        raise UnsupportedArchitectureError(
            "pre-norm sources (do_layer_norm_before=True) are not representable; "
            "the target engine normalises after each sub-layer"
        )
    if hf_config.word_embed_proj_dim != hf_config.hidden_size:
        raise UnsupportedArchitectureError(
            "sources with embedding projections (word_embed_proj_dim != hidden_size) are not supported"
        )
    if hf_config.activation_function not in _ACTIVATION_MAP:
        raise UnsupportedArchitectureError(
            f"activation {hf_config.activation_function!r} is not available in the target engine"
        )


def _hash_files(source_dir: Path) -> dict:
    out = {}
    for p in sorted(source_dir.iterdir()):
        if p.is_file() and p.suffix in {".safetensors", ".bin", ".json"}:
            out[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def _build_model(hf_config, state: dict, config_overrides: dict):
    d = hf_config.hidden_size
    layers = hf_config.num_hidden_layers
    cfg_fields = {
        "vocab_size": hf_config.vocab_size,
        "embed_dim": d,
        "n_layers": layers,
        "n_heads": hf_config.num_attention_heads,
        "ffn_hidden": hf_config.ffn_dim,
        "ffn_kind": "mlp",
        "norm_kind": "layernorm",
        "pos_kind": "learned_absolute",
        "max_seq_len": hf_config.max_position_embeddings,
        "precision": "single",
        "activation": _ACTIVATION_MAP[hf_config.activation_function],
    }
    cfg_fields.update(config_overrides or {})
    cfg = ModelConfig.create(**cfg_fields)

    mp = _Mapper(state)
    w_embd = mp.take("model.decoder.embed_tokens.weight", "embd.token", expect=(cfg.vocab_size, d))
    pos_full = mp.take(
        "model.decoder.embed_positions.weight",
        "embd.pos",
        expect=(cfg.max_seq_len + _POSITION_OFFSET, d),
    )
    w_pos = np.ascontiguousarray(pos_full[_POSITION_OFFSET:])

    # no normalisation is applied to the raw embeddings in this layout
    norms = [NormParams(kind="identity")]
    blocks = []
    for i in range(layers):
        pre = f"model.decoder.layers.{i}."
        w_in = np.concatenate(
            [
                mp.take(pre + "self_attn.k_proj.weight", f"block.{2*i}.w_in", transpose=True, expect=(d, d)),
                mp.take(pre + "self_attn.q_proj.weight", f"block.{2*i}.w_in", transpose=True, expect=(d, d)),
                mp.take(pre + "self_attn.v_proj.weight", f"block.{2*i}.w_in", transpose=True, expect=(d, d)),
            ],
            axis=1,
        )
        b_in = np.concatenate(
            [
                mp.take(pre + "self_attn.k_proj.bias", f"block.{2*i}.b_in", expect=(d,)),
                mp.take(pre + "self_attn.q_proj.bias", f"block.{2*i}.b_in", expect=(d,)),
                mp.take(pre + "self_attn.v_proj.bias", f"block.{2*i}.b_in", expect=(d,)),
            ]
        )
        blocks.append(
            BlockWeights(
                kind="attention",
                w_in=w_in,
                b_in=b_in,
                w_out=mp.take(pre + "self_attn.out_proj.weight", f"block.{2*i}.w_out", transpose=True, expect=(d, d)),
                b_out=mp.take(pre + "self_attn.out_proj.bias", f"block.{2*i}.b_out", expect=(d,)),
            )
        )
        norms.append(
            NormParams(
                kind="layernorm",
                alpha=mp.take(pre + "self_attn_layer_norm.weight", f"norm.{2*i+1}.alpha", expect=(d,)),
                beta=mp.take(pre + "self_attn_layer_norm.bias", f"norm.{2*i+1}.beta", expect=(d,)),
            )
        )
        blocks.append(
            BlockWeights(
                kind="ffn",
                w_in=mp.take(pre + "fc1.weight", f"block.{2*i+1}.w_in", transpose=True, expect=(d, cfg.ffn_hidden)),
                b_in=mp.take(pre + "fc1.bias", f"block.{2*i+1}.b_in", expect=(cfg.ffn_hidden,)),
                w_out=mp.take(pre + "fc2.weight", f"block.{2*i+1}.w_out", transpose=True, expect=(cfg.ffn_hidden, d)),
                b_out=mp.take(pre + "fc2.bias", f"block.{2*i+1}.b_out", expect=(d,)),
            )
        )
        norms.append(
            NormParams(
                kind="layernorm",
                alpha=mp.take(pre + "final_layer_norm.weight", f"norm.{2*i+2}.alpha", expect=(d,)),
                beta=mp.take(pre + "final_layer_norm.bias", f"norm.{2*i+2}.beta", expect=(d,)),
            )
        )

    if "lm_head.weight" in state:
        w_head = mp.take("lm_head.weight", "head.w", transpose=True, expect=(d, cfg.vocab_size))
    else:
        # head tied to the token embedding table
        w_head = np.ascontiguousarray(w_embd.T)
    mp.finish()

    model = TransformerModel(
        config=cfg,
        w_embd=w_embd,
        w_pos=w_pos,
        norms=norms,
        blocks=blocks,
        w_head=w_head,
        b_head=np.zeros(cfg.vocab_size, dtype=np.float32),
    )
    model.validate()
    return model, mp.entries


def _self_test(hf_model, model: TransformerModel, n_prompts: int = 8, seed: int = 0):
    import torch

    rng = np.random.default_rng(seed)
    cfg = model.config
    prompts, src_last, out_last = [], [], []
    worst = 0.0
    for _ in range(n_prompts):
        toks = rng.integers(0, cfg.vocab_size, size=min(16, cfg.max_seq_len))
        with torch.no_grad():
            ref = hf_model(torch.tensor(toks[None])).logits[0].numpy().astype(np.float64)
        got = forward(model, toks).astype(np.float64)
        worst = max(worst, float(np.max(np.abs(ref - got))))
        prompts.append([int(t) for t in toks])
        src_last.append([float(v) for v in ref[-1]])
        out_last.append([float(v) for v in got[-1]])
    return {
        "prompts": prompts,
        "max_abs_divergence": worst,
        "source_logits_last": src_last,
        "converted_logits_last": out_last,
    }


def convert_checkpoint(
    source_dir,
    out_ckpt,
    config_overrides: dict = None,
    manifest_path=None,
    tolerance: float = SELF_TEST_TOLERANCE,
) -> dict:
    """Convert a source checkpoint directory into the slicekit container.

    Writes ``out_ckpt`` plus a manifest (default: alongside it) recording the
    tensor name map, the source LayerNorm epsilon, file hashes and the
    logits of an export-time self-test against the source framework.
    Returns the manifest as a dict.
    """
    import torch
    from transformers import AutoConfig, AutoModelForCausalLM

    source_dir = Path(source_dir)
    out_ckpt = Path(out_ckpt)
    hf_config = AutoConfig.from_pretrained(source_dir)
    _check_supported(hf_config)
    hf_model = AutoModelForCausalLM.from_pretrained(source_dir, dtype=torch.float32).eval()
    state = {k: v.numpy() for k, v in hf_model.state_dict().items()}

    model, entries = _build_model(hf_config, state, config_overrides)
    self_test = _self_test(hf_model, model)
    if self_test["max_abs_divergence"] > tolerance:
        raise SelfTestError(
            f"converted logits diverge from source by {self_test['max_abs_divergence']:.3e} "
            f"(tolerance {tolerance:.1e})"
        )
    save_checkpoint(model, out_ckpt)

    manifest = {
        "source": {
            "path": str(source_dir),
            "model_type": hf_config.model_type,
            # the target engine normalises without an epsilon; the self-test
            # below bounds the effect of dropping it.  OPT sources use the
            # framework's default epsilon and do not expose it in the config.
            "layer_norm_eps": float(getattr(hf_config, "layer_norm_eps", 1e-5)),
            "file_sha256": _hash_files(source_dir),
        },
        "target": {"checkpoint": str(out_ckpt), "config": model.config.to_json()},
        "name_map": [asdict(e) for e in entries],
        "self_test": self_test,
    }
    mpath = Path(manifest_path) if manifest_path else out_ckpt.with_suffix(out_ckpt.suffix + ".manifest.json")
    mpath.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
