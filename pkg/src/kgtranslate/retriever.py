"""Dense entity retrieval: scoring, exact indexing, top-k search,
contrastive training with homonym hard negatives, and hits@k evaluation.

The index is an exact brute-force store (one unit-norm vector per entity,
ordered by entity id), so retrieval is literally a scored sort and can be
checked against an exhaustive-scan oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import Node, backward, concat, log_softmax, matmul, mul, reshape, tsum
from .encoder import EncoderConfig, EncoderParams, encode, encode_nodes, init_encoder, pad_batch, wrap_nodes
from .kg import Entity, KnowledgeGraph, entity_text, homonyms_of
from .optim import AdamW
from .store import arrays_fingerprint, load_arrays, save_arrays
from .vocab import Vocabulary, tokenize

logger = logging.getLogger(__name__)


@dataclass
class RetrieverConfig:
    learning_rate: float = 1e-5
    batch_size: int = 32
    epochs: int = 5
    n_negatives: int = 8
    temperature: float = 0.05
    k_retrieve: int = 3
    seed: int = 0
    weight_decay: float = 0.01
    max_query_len: int = 128

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "n_negatives", "temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.k_retrieve < 1:
            raise ValueError("k_retrieve must be at least 1")


@dataclass
class RetrieverExample:
    query: str
    positive: str
    negatives: list[str]

    def __post_init__(self):
        if self.positive in self.negatives:
            raise ValueError(f"positive entity {self.positive!r} also appears among negatives")


@dataclass
class EntityIndex:
    ids: list[str]  # ascending entity id, aligned with vector rows
    vectors: np.ndarray  # (N, D) unit-norm float64
    lang: str
    params_hash: str
    n_excluded: int = 0

    def __len__(self) -> int:
        return len(self.ids)

    def vector_of(self, entity_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(entity_id)]


def relevance(q: np.ndarray, e: np.ndarray) -> float:
    """Cosine similarity; equals the dot product for unit-norm inputs."""
    q = np.asarray(q, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if q.shape != e.shape:
        raise ValueError(f"dimension mismatch: {q.shape} vs {e.shape}")
    nq = np.linalg.norm(q)
    ne = np.linalg.norm(e)
    if nq == 0.0 or ne == 0.0:
        raise ValueError("relevance is undefined for zero-norm vectors")
    return float(np.clip(q @ e / (nq * ne), -1.0, 1.0))


def build_index(kg: KnowledgeGraph, params: EncoderParams, lang: str,
                batch_size: int = 256) -> EntityIndex:
    """Encode the textualization of every entity carrying a name in `lang`.
    Rows follow ascending entity id; batching is fixed so rebuilding with the
    same parameters is bit-identical."""
    eligible = kg.ids_with_language(lang)
    n_excluded = len(kg.entities) - len(eligible)
    if n_excluded:
        logger.info("build_index: excluded %d entities without a %s name", n_excluded, lang)
    texts = [entity_text(kg.entities[eid], lang) for eid in eligible]
    vecs = np.empty((len(eligible), params.config.dim), dtype=np.float64)
    for start in range(0, len(texts), batch_size):
        chunk = texts[start : start + batch_size]
        seqs = [tokenize(t, params.vocab, params.config.max_len) for t in chunk]
        ids = pad_batch(seqs, params.vocab.pad_id)
        vecs[start : start + len(chunk)] = encode_nodes(
            wrap_nodes(params.tensors), params.config, ids, params.vocab.pad_id
        ).data
    return EntityIndex(ids=eligible, vectors=vecs, lang=lang,
                       params_hash=params.fingerprint(), n_excluded=n_excluded)


def _top_k(index: EntityIndex, qvec: np.ndarray, k: int,
           min_score: Optional[float]) -> list[tuple[str, float]]:
    scores = index.vectors @ qvec
    # rows are in ascending-id order, so a stable sort on -score breaks ties
    # by ascending entity id
    order = np.argsort(-scores, kind="stable")[:k]
    out = [(index.ids[i], float(scores[i])) for i in order]
    if min_score is not None:
        out = [(eid, s) for eid, s in out if s >= min_score]
    return out


def retrieve(index: EntityIndex, params: EncoderParams, query: str, k: int,
             min_score: Optional[float] = None) -> list[tuple[str, float]]:
    """Top-k entities by relevance to the query, descending score, ties by
    ascending entity id. Returns min(k, index size) items, fewer when a
    min_score cutoff is set."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(index) == 0:
        raise ValueError("cannot retrieve from an empty index")
    if index.params_hash != params.fingerprint():
        raise ValueError("index was built with different encoder parameters; rebuild it")
    qvec = encode(params, tokenize(query, params.vocab, params.config.max_len))
    return _top_k(index, qvec, k, min_score)


def contrastive_loss(q: np.ndarray, pos: np.ndarray, negs: Sequence[np.ndarray],
                     temperature: float = 1.0) -> float:
    """Softmax cross-entropy of the positive against the negatives on
    (scaled) dot-product scores, computed with max subtraction.

    Training passes unit-norm vectors, making the scores cosines; the
    function itself accepts any vectors so limiting behaviour can be probed.
    temperature=1 reproduces the unscaled form.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    q = np.asarray(q, dtype=np.float64)
    if len(negs) == 0:
        logger.warning("contrastive_loss called without negatives; returning 0 by convention")
        return 0.0
    scores = np.array([q @ np.asarray(pos, dtype=np.float64)]
                      + [q @ np.asarray(n, dtype=np.float64) for n in negs]) / temperature
    m = scores.max()
    return float(m + math.log(np.exp(scores - m).sum()) - scores[0])


def mine_hard_negatives(kg: KnowledgeGraph, positive: Entity, n: int, lang: str,
                        rng: np.random.Generator) -> list[str]:
    """Up to `n` homonyms of the positive (shuffled), padded with uniformly
    random other entities to exactly `n`."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if len(kg.entities) < 2:
        raise ValueError("cannot mine negatives from a knowledge graph with a single entity")
    homonym_ids = sorted(e.id for e in homonyms_of(kg, positive, lang))
    picked = [homonym_ids[i] for i in rng.permutation(len(homonym_ids))][:n]
    if len(picked) < n:
        exclude = set(picked) | {positive.id}
        pool = sorted(eid for eid in kg.entities if eid not in exclude)
        need = n - len(picked)
        replace = len(pool) < need  # degenerate tiny graph: allow repeats rather than fail
        picked.extend(pool[i] for i in rng.choice(len(pool), size=need, replace=replace))
    return picked


def _batch_loss_node(params_nodes: dict[str, Node], cfg: EncoderConfig, vocab: Vocabulary,
                     queries: list[list[int]], positives: list[list[int]],
                     negatives: list[list[list[int]]], temperature: float) -> Node:
    b = len(queries)
    n_neg = len(negatives[0])
    if any(len(group) != n_neg for group in negatives):
        raise ValueError("all training examples in a batch must carry the same negative count")
    pad = vocab.pad_id
    qv = encode_nodes(params_nodes, cfg, pad_batch(queries, pad), pad)  # (B, D)
    pv = encode_nodes(params_nodes, cfg, pad_batch(positives, pad), pad)  # (B, D)
    flat_negs = [seq for group in negatives for seq in group]
    nv = encode_nodes(params_nodes, cfg, pad_batch(flat_negs, pad), pad)  # (B*n, D)
    nv = reshape(nv, (b, n_neg, cfg.dim))
    s_pos = reshape(tsum(mul(qv, pv), axis=-1), (b, 1))
    s_neg = reshape(matmul(nv, reshape(qv, (b, cfg.dim, 1))), (b, n_neg))
    logits = mul(concat([s_pos, s_neg], axis=1), 1.0 / temperature)
    logp = log_softmax(logits, axis=-1)
    pick = np.zeros((b, 1 + n_neg))
    pick[:, 0] = 1.0
    return mul(tsum(mul(logp, pick)), -1.0 / b)


def train_retriever(kg: KnowledgeGraph, dataset: list[RetrieverExample], config: RetrieverConfig,
                    lang: str, encoder_config: Optional[EncoderConfig] = None,
                    init_params: Optional[EncoderParams] = None,
                    ) -> tuple[EncoderParams, list[float]]:
    """Contrastive training over (query, positive, negatives) examples.

    Deterministic given config.seed. Returns the trained parameters and the
    per-epoch mean loss log. Aborts on a non-finite loss.
    """
    if not dataset:
        raise ValueError("retriever training dataset is empty")
    for ex in dataset:
        missing = [eid for eid in [ex.positive] + ex.negatives if eid not in kg]
        if missing:
            raise ValueError(f"training example references unknown entity ids: {missing}")

    if init_params is not None:
        params = EncoderParams(config=init_params.config,
                               tensors={k: v.copy() for k, v in init_params.tensors.items()},
                               vocab=init_params.vocab)
    else:
        vocab = build_retriever_vocab(kg, dataset, lang)
        cfg = encoder_config or EncoderConfig(vocab_size=len(vocab))
        if cfg.vocab_size != len(vocab):
            cfg = EncoderConfig(**{**asdict(cfg), "vocab_size": len(vocab)})
        params = init_encoder(cfg, vocab, seed=config.seed)

    cfg = params.config
    vocab = params.vocab
    entity_toks: dict[str, list[int]] = {}

    def toks_for(eid: str) -> list[int]:
        if eid not in entity_toks:
            entity_toks[eid] = tokenize(entity_text(kg.entities[eid], lang), vocab, cfg.max_len)
        return entity_toks[eid]

    rng = np.random.default_rng(config.seed)
    opt = AdamW(lr=config.learning_rate, weight_decay=config.weight_decay)
    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        n_batches = 0
        for start in range(0, len(dataset), config.batch_size):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            queries = [tokenize(ex.query, vocab, config.max_query_len) for ex in batch]
            positives = [toks_for(ex.positive) for ex in batch]
            negatives = [[toks_for(eid) for eid in ex.negatives] for ex in batch]
            nodes = wrap_nodes(params.tensors)
            loss = _batch_loss_node(nodes, cfg, vocab, queries, positives, negatives,
                                    config.temperature)
            if not np.isfinite(loss.data):
                raise RuntimeError(f"training diverged: non-finite loss at epoch {epoch + 1}, "
                                   f"batch {n_batches + 1}")
            backward(loss)
            grads = {k: n.grad for k, n in nodes.items() if n.grad is not None}
            opt.step(params.tensors, grads)
            total += float(loss.data)
            n_batches += 1
        history.append(total / n_batches)
        logger.info("retriever epoch %d/%d: mean loss %.6f", epoch + 1, config.epochs, history[-1])
    return params, history


def build_retriever_vocab(kg: KnowledgeGraph, dataset: list[RetrieverExample], lang: str) -> Vocabulary:
    texts = [entity_text(e, lang) for eid, e in sorted(kg.entities.items()) if lang in e.names]
    texts += [ex.query for ex in dataset]
    return Vocabulary.build(texts, languages=[lang])


def eval_hits(index: EntityIndex, params: EncoderParams,
              labeled: list[tuple[str, str]], ks: list[int]) -> dict[int, float]:
    """Fraction of queries whose gold entity id appears in the top-k."""
    if not ks:
        raise ValueError("ks must be non-empty")
    if not labeled:
        return {k: 0.0 for k in ks}
    kmax = max(ks)
    hits = {k: 0 for k in ks}
    # queries are encoded one by one, matching what retrieve() would produce
    batch = 256
    for start in range(0, len(labeled), batch):
        chunk = labeled[start : start + batch]
        seqs = [tokenize(q, params.vocab, params.config.max_len) for q, _ in chunk]
        ids = pad_batch(seqs, params.vocab.pad_id)
        qvecs = encode_nodes(wrap_nodes(params.tensors), params.config, ids, params.vocab.pad_id).data
        for (query, gold), qv in zip(chunk, qvecs):
            top = [eid for eid, _ in _top_k(index, qv, kmax, None)]
            for k in ks:
                if gold in top[:k]:
                    hits[k] += 1
    return {k: hits[k] / len(labeled) for k in ks}


def save_index(index: EntityIndex, path: str | Path) -> None:
    meta = {"kind": "entity_index", "lang": index.lang, "params_hash": index.params_hash,
            "ids": index.ids, "n_excluded": index.n_excluded}
    save_arrays(path, {"vectors": index.vectors}, meta)


def load_index(path: str | Path) -> EntityIndex:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "entity_index":
        raise ValueError(f"{path}: not an entity index checkpoint")
    return EntityIndex(ids=list(meta["ids"]), vectors=arrays["vectors"], lang=meta["lang"],
                       params_hash=meta["params_hash"], n_excluded=int(meta.get("n_excluded", 0)))
