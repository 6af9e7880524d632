"""Transformer building blocks shared by the retrieval encoder and the
seq2seq model: pre-norm residual blocks with multi-head attention and a GELU
feed-forward, expressed over the autodiff tape.

Parameters live in flat dicts keyed like "enc.0.attn.wq"; the helpers here
take a dict of tape Nodes plus a key prefix so both models reuse one code
path. Masks are additive numpy constants (0 keep, NEG_INF drop) and never
require gradients.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Node, add, concat, embed, gelu, matmul, mul, power, reshape, softmax, transpose, tsum

NEG_INF = -1e30
LN_EPS = 1e-5


def init_block(rng: np.random.Generator, dim: int, ff_dim: int, cross: bool = False) -> dict[str, np.ndarray]:
    def w(rows, cols):
        return rng.normal(0.0, 0.02, size=(rows, cols))

    p = {
        "ln1.g": np.ones(dim), "ln1.b": np.zeros(dim),
        "attn.wq": w(dim, dim), "attn.bq": np.zeros(dim),
        "attn.wk": w(dim, dim), "attn.bk": np.zeros(dim),
        "attn.wv": w(dim, dim), "attn.bv": np.zeros(dim),
        "attn.wo": w(dim, dim), "attn.bo": np.zeros(dim),
        "ln2.g": np.ones(dim), "ln2.b": np.zeros(dim),
        "ff.w1": w(dim, ff_dim), "ff.b1": np.zeros(ff_dim),
        "ff.w2": w(ff_dim, dim), "ff.b2": np.zeros(dim),
    }
    if cross:
        p.update({
            "lnc.g": np.ones(dim), "lnc.b": np.zeros(dim),
            "xattn.wq": w(dim, dim), "xattn.bq": np.zeros(dim),
            "xattn.wk": w(dim, dim), "xattn.bk": np.zeros(dim),
            "xattn.wv": w(dim, dim), "xattn.bv": np.zeros(dim),
            "xattn.wo": w(dim, dim), "xattn.bo": np.zeros(dim),
        })
    return p


def layer_norm(x: Node, g: Node, b: Node) -> Node:
    mu = mul(tsum(x, axis=-1, keepdims=True), 1.0 / x.shape[-1])
    centered = add(x, mul(mu, -1.0))
    var = mul(tsum(mul(centered, centered), axis=-1, keepdims=True), 1.0 / x.shape[-1])
    inv = power(add(var, LN_EPS), -0.5)
    return add(mul(mul(centered, inv), g), b)


def _split_heads(x: Node, n_heads: int) -> Node:
    b, t, d = x.shape
    return transpose(reshape(x, (b, t, n_heads, d // n_heads)), (0, 2, 1, 3))


def _merge_heads(x: Node) -> Node:
    b, h, t, dh = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (b, t, h * dh))


def attention(p: dict[str, Node], prefix: str, x_q: Node, x_kv: Node, n_heads: int,
              mask_add: np.ndarray | None) -> Node:
    """Multi-head scaled dot-product attention. `mask_add` broadcasts against
    the (B, H, Tq, Tk) score tensor; masked scores are pushed to NEG_INF so
    their softmax weight underflows to exactly zero."""
    q = add(matmul(x_q, p[prefix + ".wq"]), p[prefix + ".bq"])
    k = add(matmul(x_kv, p[prefix + ".wk"]), p[prefix + ".bk"])
    v = add(matmul(x_kv, p[prefix + ".wv"]), p[prefix + ".bv"])
    dh = x_q.shape[-1] // n_heads
    qh, kh, vh = _split_heads(q, n_heads), _split_heads(k, n_heads), _split_heads(v, n_heads)
    scores = mul(matmul(qh, transpose(kh, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    if mask_add is not None:
        scores = add(scores, mask_add)
    att = softmax(scores, axis=-1)
    ctx = _merge_heads(matmul(att, vh))
    return add(matmul(ctx, p[prefix + ".wo"]), p[prefix + ".bo"])


def feed_forward(p: dict[str, Node], prefix: str, x: Node) -> Node:
    h = gelu(add(matmul(x, p[prefix + ".w1"]), p[prefix + ".b1"]))
    return add(matmul(h, p[prefix + ".w2"]), p[prefix + ".b2"])


def encoder_block(p: dict[str, Node], prefix: str, x: Node, n_heads: int,
                  key_mask_add: np.ndarray | None) -> Node:
    h = layer_norm(x, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"])
    x = add(x, attention(p, prefix + ".attn", h, h, n_heads, key_mask_add))
    f = feed_forward(p, prefix + ".ff", layer_norm(x, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"]))
    return add(x, f)


def decoder_block(p: dict[str, Node], prefix: str, x: Node, memory: Node, n_heads: int,
                  self_mask_add: np.ndarray, mem_mask_add: np.ndarray | None) -> Node:
    h = layer_norm(x, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"])
    x = add(x, attention(p, prefix + ".attn", h, h, n_heads, self_mask_add))
    hc = layer_norm(x, p[prefix + ".lnc.g"], p[prefix + ".lnc.b"])
    x = add(x, attention(p, prefix + ".xattn", hc, memory, n_heads, mem_mask_add))
    hf = layer_norm(x, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"])
    return add(x, feed_forward(p, prefix + ".ff", hf))


def embed_sequence(p: dict[str, Node], tok_key: str, pos_key: str, ids: np.ndarray) -> Node:
    """Token + learned positional embeddings for an id batch (B, T)."""
    t = ids.shape[1]
    tok = embed(p[tok_key], ids)
    pos = embed(p[pos_key], np.arange(t))
    return add(tok, pos)


def key_mask_from_pad(ids: np.ndarray, pad_id: int) -> np.ndarray | None:
    """Additive mask (B, 1, 1, T) hiding PAD keys; None when nothing is padded."""
    pad = ids == pad_id
    if not pad.any():
        return None
    return np.where(pad, NEG_INF, 0.0)[:, None, None, :]


def causal_mask(t: int) -> np.ndarray:
    """Additive (1, 1, T, T) mask forbidding attention to future positions."""
    return np.where(np.triu(np.ones((t, t), dtype=bool), k=1), NEG_INF, 0.0)[None, None]


def combine_masks(a: np.ndarray | None, b: np.ndarray | None) -> np.ndarray | None:
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def pool_and_normalize(states: Node, keep_mask: np.ndarray) -> Node:
    """Mean over kept positions followed by L2 normalization.

    `states` is (B, T, D); `keep_mask` is a 0/1 float array (B, T). The tiny
    epsilon under the square root only guards the all-zero corner; it is far
    below float64 resolution for any unit-scale vector.
    """
    m = keep_mask[:, :, None]
    counts = keep_mask.sum(axis=1)[:, None]
    pooled = mul(tsum(mul(states, m), axis=1), 1.0 / counts)
    sq = tsum(mul(pooled, pooled), axis=-1, keepdims=True)
    inv = power(add(sq, 1e-24), -0.5)
    return mul(pooled, inv)


__all__ = [
    "NEG_INF", "LN_EPS", "init_block", "layer_norm", "attention", "feed_forward",
    "encoder_block", "decoder_block", "embed_sequence", "key_mask_from_pad",
    "causal_mask", "combine_masks", "pool_and_normalize", "concat",
]
