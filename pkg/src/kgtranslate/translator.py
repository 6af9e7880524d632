"""Knowledge-enhanced toy transformer translator.

Supports four integration modes:
  none      plain seq2seq over the source text
  explicit  source text extended with "[KG] name -> name ; ..." pairs
  implicit  retriever entity embeddings prepended to the encoder states
  both      suffix and embeddings together

The decoder starts from a target-language tag token and cross-attends over
the (optionally fused) encoder states. Everything runs on the float64 tape,
so a full training step can be gradient-checked against finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import layers
from .autodiff import Node, add, backward, concat, log_softmax, matmul, mul, select_last, tsum
from .kg import KnowledgeGraph
from .optim import AdamW
from .retriever import EncoderParams, EntityIndex, retrieve
from .store import arrays_fingerprint, load_arrays, save_arrays
from .vocab import Vocabulary, detokenize, tokenize

logger = logging.getLogger(__name__)

MODES = ("none", "explicit", "implicit", "both")
KNOWLEDGE_SOURCES = ("retrieved", "gold")


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown integration mode {mode!r}; expected one of {MODES}")
    return mode


@dataclass(frozen=True)
class Seq2SeqConfig:
    vocab_size: int
    dim: int = 64
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 256
    max_input_len: int = 512
    max_output_len: int = 512
    retriever_dim: int = 64

    def __post_init__(self):
        if self.dim % self.n_heads:
            raise ValueError("dim must be divisible by n_heads")
        for name in ("vocab_size", "dim", "n_enc_layers", "n_dec_layers", "n_heads",
                     "ff_dim", "max_input_len", "max_output_len", "retriever_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Seq2SeqParams:
    config: Seq2SeqConfig
    tensors: dict[str, np.ndarray]
    vocab: Vocabulary
    src_lang: str
    tgt_lang: str

    def fingerprint(self) -> str:
        return arrays_fingerprint(self.tensors)


@dataclass
class TranslationExample:
    source: str
    target: str
    gold_entities: list[str] = field(default_factory=list)


@dataclass
class EntityNamePair:
    """One retrieved or gold entity: source name, target name, and optionally
    the retriever embedding (implicit/both modes) and retrieval score."""

    entity_id: str
    name_src: str
    name_tgt: str
    embedding: Optional[np.ndarray] = None
    score: Optional[float] = None

    def __post_init__(self):
        if not self.name_src.strip() or not self.name_tgt.strip():
            raise ValueError(f"entity {self.entity_id!r}: names must be non-empty")


@dataclass
class RetrieverRuntime:
    """Trained retriever checkpointed pieces needed at translation time."""

    params: EncoderParams
    index: EntityIndex
    _row: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._row = {eid: i for i, eid in enumerate(self.index.ids)}

    def embedding_of(self, entity_id: str) -> np.ndarray:
        return self.index.vectors[self._row[entity_id]]


def init_seq2seq(cfg: Seq2SeqConfig, vocab: Vocabulary, src_lang: str, tgt_lang: str,
                 seed: int) -> Seq2SeqParams:
    if len(vocab) != cfg.vocab_size:
        raise ValueError("vocabulary size does not match the config")
    rng = np.random.default_rng(seed)
    t = {
        "tok_emb": rng.normal(0.0, 0.02, size=(cfg.vocab_size, cfg.dim)),
        "pos_enc": rng.normal(0.0, 0.02, size=(cfg.max_input_len, cfg.dim)),
        "pos_dec": rng.normal(0.0, 0.02, size=(cfg.max_output_len, cfg.dim)),
    }
    for i in range(cfg.n_enc_layers):
        for k, v in layers.init_block(rng, cfg.dim, cfg.ff_dim).items():
            t[f"enc.{i}.{k}"] = v
    for i in range(cfg.n_dec_layers):
        for k, v in layers.init_block(rng, cfg.dim, cfg.ff_dim, cross=True).items():
            t[f"dec.{i}.{k}"] = v
    t["enc_ln_f.g"] = np.ones(cfg.dim)
    t["enc_ln_f.b"] = np.zeros(cfg.dim)
    t["dec_ln_f.g"] = np.ones(cfg.dim)
    t["dec_ln_f.b"] = np.zeros(cfg.dim)
    t["out.w"] = rng.normal(0.0, 0.02, size=(cfg.dim, cfg.vocab_size))
    t["out.b"] = np.zeros(cfg.vocab_size)
    # fusion projection exists in every mode, even when unused
    t["fuse.p"] = rng.normal(0.0, 0.02, size=(cfg.retriever_dim, cfg.dim))
    return Seq2SeqParams(config=cfg, tensors=t, vocab=vocab, src_lang=src_lang, tgt_lang=tgt_lang)


# ---------------------------------------------------------------------------
# Explicit integration: source text augmentation
# ---------------------------------------------------------------------------

def pair_tokens(pair: EntityNamePair, vocab: Vocabulary) -> list[int]:
    return ([vocab.id(w) for w in pair.name_src.split()] + [vocab.arrow_id]
            + [vocab.id(w) for w in pair.name_tgt.split()])


def build_kg_input(source: list[int], pairs: Sequence[EntityNamePair], vocab: Vocabulary,
                   max_input_len: int = 512) -> list[int]:
    """Append "[KG] src -> tgt ; src -> tgt ..." to a tokenized source.

    `source` is a tokenize() output (BOS ... EOS). Whole pairs are dropped
    from the lowest retrieval rank upward when the budget overflows; the
    source itself is never truncated, and an unavoidable overflow raises,
    naming the dropped pairs.
    """
    if not source or source[-1] != vocab.eos_id:
        raise ValueError("source token sequence must end with EOS")
    body = source[:-1]
    kept = list(pairs)
    dropped: list[EntityNamePair] = []
    while True:
        suffix: list[int] = [vocab.kg_id]
        for i, pair in enumerate(kept):
            if i:
                suffix.append(vocab.sep_id)
            suffix.extend(pair_tokens(pair, vocab))
        out = body + suffix + [vocab.eos_id]
        if len(out) <= max_input_len:
            if dropped:
                logger.warning("build_kg_input: dropped %d pairs to fit the input budget: %s",
                               len(dropped), [p.name_src for p in dropped])
            return out
        if not kept:
            raise ValueError(
                f"source plus knowledge marker exceeds max input length {max_input_len} "
                f"even after dropping all pairs: {[p.name_src for p in dropped]}")
        dropped.append(kept.pop())  # lowest retrieval rank first


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def encode_source_nodes(p: dict[str, Node], cfg: Seq2SeqConfig, ids: np.ndarray,
                        pad_id: int) -> Node:
    if ids.shape[1] > cfg.max_input_len:
        raise ValueError(f"input length {ids.shape[1]} exceeds max input length {cfg.max_input_len}")
    x = layers.embed_sequence(p, "tok_emb", "pos_enc", ids)
    key_mask = layers.key_mask_from_pad(ids, pad_id)
    for i in range(cfg.n_enc_layers):
        x = layers.encoder_block(p, f"enc.{i}", x, cfg.n_heads, key_mask)
    return layers.layer_norm(x, p["enc_ln_f.g"], p["enc_ln_f.b"])


def encode_source(params: Seq2SeqParams, toks: list[int]) -> np.ndarray:
    """Hidden states for one token sequence: (len(toks), dim), deterministic."""
    from .encoder import wrap_nodes  # shared tiny helper

    ids = np.asarray([toks], dtype=np.int64)
    return encode_source_nodes(wrap_nodes(params.tensors), params.config, ids,
                               params.vocab.pad_id).data[0]


def fuse(entity_embeddings: Sequence[np.ndarray], h: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Prepend projected retriever embeddings to encoder states.

    Output has len(entity_embeddings) + len(h) rows; the trailing rows are
    `h` unchanged. With no embeddings the states pass through untouched.
    """
    if len(entity_embeddings) == 0:
        return h
    emb = np.asarray(entity_embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[1] != p.shape[0]:
        raise ValueError(f"embedding dim {emb.shape} does not match projection {p.shape}")
    if p.shape[1] != h.shape[-1]:
        raise ValueError(f"projection output dim {p.shape[1]} does not match states {h.shape}")
    return np.concatenate([emb @ p, h], axis=0)


def decoder_nodes(p: dict[str, Node], cfg: Seq2SeqConfig, dec_ids: np.ndarray, memory,
                  mem_mask_add: Optional[np.ndarray], pad_id: int) -> Node:
    """Decoder logits (B, Td, V) over memory states (B, S, dim)."""
    td = dec_ids.shape[1]
    if td > cfg.max_output_len:
        raise ValueError(f"decoder length {td} exceeds max output length {cfg.max_output_len}")
    x = layers.embed_sequence(p, "tok_emb", "pos_dec", dec_ids)
    self_mask = layers.combine_masks(layers.causal_mask(td),
                                     layers.key_mask_from_pad(dec_ids, pad_id))
    for i in range(cfg.n_dec_layers):
        x = layers.decoder_block(p, f"dec.{i}", x, memory, cfg.n_heads, self_mask, mem_mask_add)
    x = layers.layer_norm(x, p["dec_ln_f.g"], p["dec_ln_f.b"])
    return add(matmul(x, p["out.w"]), p["out.b"])


def decoder_logits(params: Seq2SeqParams, dec_ids: list[int], memory: np.ndarray) -> np.ndarray:
    """Inference helper: logits (len(dec_ids), V) for one forced prefix."""
    from .encoder import wrap_nodes

    ids = np.asarray([dec_ids], dtype=np.int64)
    out = decoder_nodes(wrap_nodes(params.tensors), params.config, ids,
                        memory[None, :, :], None, params.vocab.pad_id)
    return out.data[0]


def decode(params: Seq2SeqParams, fused: np.ndarray, strategy: str = "greedy",
           max_len: int = 64, beam_width: int = 4) -> list[int]:
    """Autoregressive generation over fused encoder states.

    Starts from the target-language tag, stops at EOS or `max_len` generated
    tokens. `strategy` is "greedy" or "beam"; beam search keeps `beam_width`
    hypotheses, breaking score ties by token ids.
    """
    cfg = params.config
    if max_len < 1 or max_len > cfg.max_output_len - 1:
        raise ValueError(f"max_len must be in [1, {cfg.max_output_len - 1}]")
    start = params.vocab.lang_id(params.tgt_lang)
    eos = params.vocab.eos_id
    if strategy == "greedy":
        seq: list[int] = []
        while len(seq) < max_len:
            logits = decoder_logits(params, [start] + seq, fused)[-1]
            nxt = int(np.argmax(logits))  # first max = lowest token id
            seq.append(nxt)
            if nxt == eos:
                break
        return seq
    if strategy == "beam":
        if beam_width < 1:
            raise ValueError("beam width must be at least 1")
        beams: list[tuple[float, tuple[int, ...], bool]] = [(0.0, (), False)]
        for _ in range(max_len):
            candidates: list[tuple[float, tuple[int, ...], bool]] = []
            for score, seq, done in beams:
                if done:
                    candidates.append((score, seq, True))
                    continue
                logits = decoder_logits(params, [start] + list(seq), fused)[-1]
                m = logits.max()
                logp = logits - (m + np.log(np.exp(logits - m).sum()))
                top = np.argsort(-logp, kind="stable")[:beam_width]
                for tok in top:
                    tok = int(tok)
                    candidates.append((score + float(logp[tok]), seq + (tok,), tok == eos))
            candidates.sort(key=lambda c: (-c[0], c[1]))
            beams = candidates[:beam_width]
            if all(done for _, _, done in beams):
                break
        return list(beams[0][1])
    raise ValueError(f"unknown decoding strategy {strategy!r}")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class MtTrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 32
    epochs: int = 5
    k_retrieve: int = 3
    seed: int = 0
    weight_decay: float = 0.01
    max_target_len: int = 64

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "max_target_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.k_retrieve < 0:
            raise ValueError("k_retrieve must be non-negative")


def resolve_pairs(source: str, gold_ids: Sequence[str], mode: str, knowledge: str,
                  kg: KnowledgeGraph, runtime: Optional[RetrieverRuntime], k: int,
                  src_lang: str, tgt_lang: str,
                  min_score: Optional[float] = None) -> list[EntityNamePair]:
    """Entity name pairs for one source text, from retrieval or gold ids."""
    check_mode(mode)
    if mode == "none" or k == 0:
        return []
    if knowledge not in KNOWLEDGE_SOURCES:
        raise ValueError(f"unknown knowledge source {knowledge!r}")
    if knowledge == "retrieved":
        if runtime is None:
            raise ValueError("retrieved knowledge requires a trained retriever runtime")
        scored = retrieve(runtime.index, runtime.params, source, k, min_score=min_score)
    else:
        scored = [(eid, None) for eid in list(gold_ids)[:k]]
    want_embedding = mode in ("implicit", "both")
    if want_embedding and runtime is None:
        raise ValueError("implicit integration requires a retriever runtime for embeddings")
    pairs: list[EntityNamePair] = []
    for eid, score in scored:
        e = kg.entities.get(eid)
        if e is None:
            raise ValueError(f"entity {eid!r} not present in the knowledge graph")
        if src_lang not in e.names or tgt_lang not in e.names:
            logger.warning("skipping entity %s: missing a %s or %s name", eid, src_lang, tgt_lang)
            continue
        pairs.append(EntityNamePair(
            entity_id=eid,
            name_src=e.primary_name(src_lang),
            name_tgt=e.primary_name(tgt_lang),
            embedding=runtime.embedding_of(eid) if want_embedding else None,
            score=score,
        ))
    return pairs


def _encoder_input_ids(source: str, pairs: list[EntityNamePair], mode: str,
                       vocab: Vocabulary, cfg: Seq2SeqConfig) -> list[int]:
    src_toks = tokenize(source, vocab, cfg.max_input_len)
    if mode in ("explicit", "both"):
        return build_kg_input(src_toks, pairs, vocab, cfg.max_input_len)
    return src_toks


def _memory_nodes(p: dict[str, Node], cfg: Seq2SeqConfig, enc_ids: np.ndarray, pad_id: int,
                  emb: Optional[np.ndarray], slot_mask: Optional[np.ndarray]):
    """Encoder forward plus optional embedding fusion; returns (memory,
    additive memory mask) ready for decoder cross-attention."""
    enc = encode_source_nodes(p, cfg, enc_ids, pad_id)
    pad = np.where(enc_ids == pad_id, layers.NEG_INF, 0.0)[:, None, None, :]
    if emb is None:
        return enc, pad
    proj = matmul(emb, p["fuse.p"])  # (B, K, dim); emb is a constant
    memory = concat([proj, enc], axis=1)
    slot = np.where(slot_mask > 0, 0.0, layers.NEG_INF)[:, None, None, :]
    return memory, np.concatenate([slot, pad], axis=-1)


def _mt_loss_node(p: dict[str, Node], cfg: Seq2SeqConfig, pad_id: int,
                  enc_ids: np.ndarray, dec_in: np.ndarray, labels: np.ndarray,
                  label_mask: np.ndarray, emb: Optional[np.ndarray],
                  slot_mask: Optional[np.ndarray]) -> Node:
    memory, mem_mask = _memory_nodes(p, cfg, enc_ids, pad_id, emb, slot_mask)
    logits = decoder_nodes(p, cfg, dec_in, memory, mem_mask, pad_id)
    logp = log_softmax(logits, axis=-1)
    picked = select_last(logp, labels)
    return mul(tsum(mul(picked, label_mask)), -1.0 / label_mask.sum())


@dataclass
class _PreparedExample:
    enc_ids: list[int]
    dec_in: list[int]
    labels: list[int]
    emb: Optional[np.ndarray]  # (K, retriever_dim) with zero rows for empty slots
    n_slots: int


def _prepare_example(ex: TranslationExample, pairs: list[EntityNamePair], mode: str,
                     vocab: Vocabulary, cfg: Seq2SeqConfig, tgt_lang: str,
                     max_target_len: int, k_slots: int) -> _PreparedExample:
    enc_ids = _encoder_input_ids(ex.source, pairs, mode, vocab, cfg)
    tgt_ids = [vocab.id(w) for w in ex.target.split()][: max_target_len - 1]
    dec_in = [vocab.lang_id(tgt_lang)] + tgt_ids
    labels = tgt_ids + [vocab.eos_id]
    emb = None
    n_slots = 0
    if mode in ("implicit", "both"):
        emb = np.zeros((k_slots, cfg.retriever_dim))
        for i, pair in enumerate(pairs[:k_slots]):
            emb[i] = pair.embedding
            n_slots += 1
    return _PreparedExample(enc_ids, dec_in, labels, emb, n_slots)


def _collate(batch: list[_PreparedExample], pad_id: int):
    ts = max(len(b.enc_ids) for b in batch)
    td = max(len(b.dec_in) for b in batch)
    enc = np.full((len(batch), ts), pad_id, dtype=np.int64)
    dec = np.full((len(batch), td), pad_id, dtype=np.int64)
    labels = np.full((len(batch), td), pad_id, dtype=np.int64)
    mask = np.zeros((len(batch), td))
    for i, b in enumerate(batch):
        enc[i, : len(b.enc_ids)] = b.enc_ids
        dec[i, : len(b.dec_in)] = b.dec_in
        labels[i, : len(b.labels)] = b.labels
        mask[i, : len(b.labels)] = 1.0
    emb = None
    slot_mask = None
    if batch[0].emb is not None:
        emb = np.stack([b.emb for b in batch])
        slot_mask = np.zeros(emb.shape[:2])
        for i, b in enumerate(batch):
            slot_mask[i, : b.n_slots] = 1.0
    return enc, dec, labels, mask, emb, slot_mask


def build_translator_vocab(dataset: list[TranslationExample], kg: Optional[KnowledgeGraph],
                           mode: str, src_lang: str, tgt_lang: str) -> Vocabulary:
    """Vocabulary over the parallel data, plus every knowledge-graph name in
    either language when knowledge is integrated. In mode "none" the result
    is independent of the knowledge graph by construction."""
    texts = [ex.source for ex in dataset] + [ex.target for ex in dataset]
    if mode != "none":
        if kg is None:
            raise ValueError("knowledge-integrating modes need the knowledge graph")
        for _, e in sorted(kg.entities.items()):
            for lang in (src_lang, tgt_lang):
                texts.extend(e.names.get(lang, []))
    return Vocabulary.build(texts, languages=[src_lang, tgt_lang])


def train_translator(dataset: list[TranslationExample], kg: Optional[KnowledgeGraph],
                     mode: str, knowledge: str, train_cfg: MtTrainConfig,
                     src_lang: str, tgt_lang: str,
                     runtime: Optional[RetrieverRuntime] = None,
                     seq2seq_config: Optional[Seq2SeqConfig] = None,
                     ) -> tuple[Seq2SeqParams, list[float]]:
    """Teacher-forced cross-entropy training; deterministic given the seed.

    Entity pairs per example come from retrieval (frozen retriever) or from
    the example's gold entity ids, resolved once before the first epoch.
    Returns the trained parameters and per-epoch mean losses.
    """
    check_mode(mode)
    if not dataset:
        raise ValueError("translation training dataset is empty")
    vocab = build_translator_vocab(dataset, kg, mode, src_lang, tgt_lang)
    if seq2seq_config is None:
        cfg = Seq2SeqConfig(vocab_size=len(vocab))
    elif seq2seq_config.vocab_size != len(vocab):
        cfg = Seq2SeqConfig(**{**asdict(seq2seq_config), "vocab_size": len(vocab)})
    else:
        cfg = seq2seq_config
    if runtime is not None and cfg.retriever_dim != runtime.params.config.dim:
        cfg = Seq2SeqConfig(**{**asdict(cfg), "retriever_dim": runtime.params.config.dim})
    params = init_seq2seq(cfg, vocab, src_lang, tgt_lang, seed=train_cfg.seed)

    prepared: list[_PreparedExample] = []
    for ex in dataset:
        pairs = resolve_pairs(ex.source, ex.gold_entities, mode, knowledge, kg, runtime,
                              train_cfg.k_retrieve, src_lang, tgt_lang) if mode != "none" else []
        prepared.append(_prepare_example(ex, pairs, mode, vocab, cfg, tgt_lang,
                                         train_cfg.max_target_len, train_cfg.k_retrieve))

    from .encoder import wrap_nodes

    rng = np.random.default_rng(train_cfg.seed)
    opt = AdamW(lr=train_cfg.learning_rate, weight_decay=train_cfg.weight_decay)
    history: list[float] = []
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(prepared))
        total = 0.0
        n_batches = 0
        for start in range(0, len(prepared), train_cfg.batch_size):
            batch = [prepared[i] for i in order[start : start + train_cfg.batch_size]]
            enc, dec, labels, mask, emb, slot_mask = _collate(batch, vocab.pad_id)
            nodes = wrap_nodes(params.tensors)
            loss = _mt_loss_node(nodes, cfg, vocab.pad_id, enc, dec, labels, mask, emb, slot_mask)
            if not np.isfinite(loss.data):
                raise RuntimeError(f"training diverged: non-finite loss at epoch {epoch + 1}, "
                                   f"batch {n_batches + 1}")
            backward(loss)
            grads = {k: n.grad for k, n in nodes.items() if n.grad is not None}
            opt.step(params.tensors, grads)
            total += float(loss.data)
            n_batches += 1
        history.append(total / n_batches)
        logger.info("translator [%s/%s] epoch %d/%d: mean loss %.6f",
                    mode, knowledge, epoch + 1, train_cfg.epochs, history[-1])
    return params, history


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def _fused_memory(params: Seq2SeqParams, enc_ids: list[int],
                  pairs: list[EntityNamePair], mode: str) -> np.ndarray:
    h = encode_source(params, enc_ids)
    if mode in ("implicit", "both") and pairs:
        embs = [p.embedding for p in pairs if p.embedding is not None]
        return fuse(embs, h, params.tensors["fuse.p"])
    return h


def translate(params: Seq2SeqParams, runtime: Optional[RetrieverRuntime],
              kg: Optional[KnowledgeGraph], text: str, mode: str, k: int = 3,
              strategy: str = "greedy", max_len: int = 64, beam_width: int = 4,
              knowledge: str = "retrieved", gold_ids: Sequence[str] = (),
              min_score: Optional[float] = None) -> tuple[str, list[EntityNamePair]]:
    """Full pipeline for one source text: retrieve (or take gold entities),
    integrate per `mode`, decode, detokenize. Returns the translation and the
    provenance of every injected entity pair."""
    check_mode(mode)
    pairs = resolve_pairs(text, gold_ids, mode, knowledge, kg, runtime, k,
                          params.src_lang, params.tgt_lang, min_score=min_score)
    enc_ids = _encoder_input_ids(text, pairs, mode, params.vocab, params.config)
    fused = _fused_memory(params, enc_ids, pairs, mode)
    out_ids = decode(params, fused, strategy=strategy, max_len=max_len, beam_width=beam_width)
    return detokenize(out_ids, params.vocab), pairs


def translate_batch_greedy(params: Seq2SeqParams, inputs: list[tuple[list[int], Optional[np.ndarray]]],
                           max_len: int = 64, batch_size: int = 64) -> list[list[int]]:
    """Greedy decoding for many pre-built inputs at once.

    Each input is (encoder token ids, optional (K, retriever_dim) embedding
    block). Batching is fixed-size and order-preserving, so results are
    reproducible run to run.
    """
    from .encoder import wrap_nodes

    cfg = params.config
    pad_id = params.vocab.pad_id
    eos = params.vocab.eos_id
    start = params.vocab.lang_id(params.tgt_lang)
    results: list[list[int]] = []
    for base in range(0, len(inputs), batch_size):
        chunk = inputs[base : base + batch_size]
        b = len(chunk)
        ts = max(len(ids) for ids, _ in chunk)
        enc = np.full((b, ts), pad_id, dtype=np.int64)
        for i, (ids, _) in enumerate(chunk):
            enc[i, : len(ids)] = ids
        embs = [e for _, e in chunk]
        if any(e is not None and len(e) for e in embs):
            k_slots = max(len(e) for e in embs if e is not None)
            emb = np.zeros((b, k_slots, cfg.retriever_dim))
            slot_mask = np.zeros((b, k_slots))
            for i, e in enumerate(embs):
                if e is not None and len(e):
                    emb[i, : len(e)] = e
                    slot_mask[i, : len(e)] = 1.0
        else:
            emb, slot_mask = None, None
        nodes = wrap_nodes(params.tensors)
        memory, mem_mask = _memory_nodes(nodes, cfg, enc, pad_id, emb, slot_mask)
        memory_data = memory.data
        seqs = np.full((b, 1), start, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        for _ in range(max_len):
            logits = decoder_nodes(nodes, cfg, seqs, memory_data, mem_mask, pad_id).data[:, -1]
            nxt = np.argmax(logits, axis=-1)
            nxt = np.where(done, pad_id, nxt)
            seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
            done |= nxt == eos
            if done.all():
                break
        for i in range(b):
            out = []
            for tok in seqs[i, 1:]:
                tok = int(tok)
                if tok == pad_id:
                    break
                out.append(tok)
                if tok == eos:
                    break
            results.append(out)
    return results


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_seq2seq(params: Seq2SeqParams, path: str | Path, extra_meta: Optional[dict] = None) -> None:
    meta = {"kind": "seq2seq", "config": asdict(params.config),
            "src_lang": params.src_lang, "tgt_lang": params.tgt_lang}
    if extra_meta:
        meta.update(extra_meta)
    save_arrays(path, params.tensors, meta)


def load_seq2seq(path: str | Path, vocab: Vocabulary) -> tuple[Seq2SeqParams, dict]:
    tensors, meta = load_arrays(path)
    if meta.get("kind") != "seq2seq":
        raise ValueError(f"{path}: not a seq2seq checkpoint")
    params = Seq2SeqParams(config=Seq2SeqConfig(**meta["config"]), tensors=tensors,
                           vocab=vocab, src_lang=meta["src_lang"], tgt_lang=meta["tgt_lang"])
    return params, meta
