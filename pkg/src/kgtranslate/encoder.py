"""Trainable text encoder producing unit-norm dense vectors.

A small pre-norm transformer: token + positional embeddings, self-attention
blocks, final layer norm, mean pooling over non-PAD positions, then L2
normalization. All math runs on the float64 autodiff tape, so the same code
path serves inference, training, and gradient verification.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import layers
from .autodiff import Node, backward, mul, tsum
from .store import arrays_fingerprint, load_arrays, save_arrays
from .vocab import Vocabulary


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 256
    max_len: int = 128

    def __post_init__(self):
        if self.dim % self.n_heads:
            raise ValueError("dim must be divisible by n_heads")
        for name in ("vocab_size", "dim", "n_layers", "n_heads", "ff_dim", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class EncoderParams:
    config: EncoderConfig
    tensors: dict[str, np.ndarray]
    vocab: Vocabulary

    def fingerprint(self) -> str:
        return arrays_fingerprint(self.tensors)

    def validate(self) -> None:
        expected = param_shapes(self.config)
        if set(expected) != set(self.tensors):
            raise ValueError("encoder tensor names do not match the config")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"tensor {name} has shape {self.tensors[name].shape}, expected {shape}")
            if not np.isfinite(self.tensors[name]).all():
                raise ValueError(f"tensor {name} contains non-finite values")
        if len(self.vocab) != self.config.vocab_size:
            raise ValueError("vocabulary size does not match the config")


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple]:
    shapes = {
        "tok_emb": (cfg.vocab_size, cfg.dim),
        "pos_emb": (cfg.max_len, cfg.dim),
        "ln_f.g": (cfg.dim,),
        "ln_f.b": (cfg.dim,),
    }
    block = {
        "ln1.g": (cfg.dim,), "ln1.b": (cfg.dim,),
        "attn.wq": (cfg.dim, cfg.dim), "attn.bq": (cfg.dim,),
        "attn.wk": (cfg.dim, cfg.dim), "attn.bk": (cfg.dim,),
        "attn.wv": (cfg.dim, cfg.dim), "attn.bv": (cfg.dim,),
        "attn.wo": (cfg.dim, cfg.dim), "attn.bo": (cfg.dim,),
        "ln2.g": (cfg.dim,), "ln2.b": (cfg.dim,),
        "ff.w1": (cfg.dim, cfg.ff_dim), "ff.b1": (cfg.ff_dim,),
        "ff.w2": (cfg.ff_dim, cfg.dim), "ff.b2": (cfg.dim,),
    }
    for i in range(cfg.n_layers):
        for k, v in block.items():
            shapes[f"blocks.{i}.{k}"] = v
    return shapes


def init_encoder(cfg: EncoderConfig, vocab: Vocabulary, seed: int) -> EncoderParams:
    if len(vocab) != cfg.vocab_size:
        raise ValueError("vocabulary size does not match the config")
    rng = np.random.default_rng(seed)
    tensors = {
        "tok_emb": rng.normal(0.0, 0.02, size=(cfg.vocab_size, cfg.dim)),
        "pos_emb": rng.normal(0.0, 0.02, size=(cfg.max_len, cfg.dim)),
    }
    for i in range(cfg.n_layers):
        for k, v in layers.init_block(rng, cfg.dim, cfg.ff_dim).items():
            tensors[f"blocks.{i}.{k}"] = v
    tensors["ln_f.g"] = np.ones(cfg.dim)
    tensors["ln_f.b"] = np.zeros(cfg.dim)
    return EncoderParams(config=cfg, tensors=tensors, vocab=vocab)


def wrap_nodes(tensors: dict[str, np.ndarray]) -> dict[str, Node]:
    return {k: Node(v) for k, v in tensors.items()}


def encode_nodes(p: dict[str, Node], cfg: EncoderConfig, ids: np.ndarray, pad_id: int) -> Node:
    """Tape forward for a padded id batch (B, T) -> unit-norm vectors (B, D)."""
    if ids.shape[1] > cfg.max_len:
        raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {cfg.max_len}")
    if ids.max(initial=0) >= cfg.vocab_size or ids.min(initial=0) < 0:
        raise ValueError("token id out of range for the encoder vocabulary")
    x = layers.embed_sequence(p, "tok_emb", "pos_emb", ids)
    key_mask = layers.key_mask_from_pad(ids, pad_id)
    for i in range(cfg.n_layers):
        x = layers.encoder_block(p, f"blocks.{i}", x, cfg.n_heads, key_mask)
    x = layers.layer_norm(x, p["ln_f.g"], p["ln_f.b"])
    keep = (ids != pad_id).astype(np.float64)
    return layers.pool_and_normalize(x, keep)


def pad_batch(seqs: list[list[int]], pad_id: int) -> np.ndarray:
    t = max(len(s) for s in seqs)
    out = np.full((len(seqs), t), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def encode_batch(params: EncoderParams, seqs: list[list[int]]) -> np.ndarray:
    """Encode a list of token sequences; rows are unit-norm (B, D) float64."""
    ids = pad_batch(seqs, params.vocab.pad_id)
    return encode_nodes(wrap_nodes(params.tensors), params.config, ids, params.vocab.pad_id).data


def encode(params: EncoderParams, toks: list[int]) -> np.ndarray:
    """Encode one token sequence to a unit-norm vector of dimension `dim`."""
    return encode_batch(params, [toks])[0]


def encode_grad(params: EncoderParams, toks: list[int], upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of (upstream . encode(params, toks))
    with respect to every parameter tensor."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (params.config.dim,):
        raise ValueError(f"upstream has shape {upstream.shape}, expected ({params.config.dim},)")
    nodes = wrap_nodes(params.tensors)
    ids = pad_batch([toks], params.vocab.pad_id)
    vec = encode_nodes(nodes, params.config, ids, params.vocab.pad_id)
    loss = tsum(mul(vec, upstream[None, :]))
    backward(loss)
    return {k: (n.grad if n.grad is not None else np.zeros_like(n.data)) for k, n in nodes.items()}


def save_encoder(params: EncoderParams, path: str | Path) -> None:
    meta = {"kind": "text_encoder", "config": asdict(params.config)}
    save_arrays(path, params.tensors, meta)


def load_encoder(path: str | Path, vocab: Vocabulary) -> EncoderParams:
    tensors, meta = load_arrays(path)
    if meta.get("kind") != "text_encoder":
        raise ValueError(f"{path}: not a text encoder checkpoint")
    params = EncoderParams(config=EncoderConfig(**meta["config"]), tensors=tensors, vocab=vocab)
    params.validate()
    return params
