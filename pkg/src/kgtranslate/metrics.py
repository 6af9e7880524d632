"""Translation quality metrics: entity-name translation accuracy and BLEU.

Entity matching is substring containment after the same normalization the
knowledge graph uses for its name index, so case, composition form, and
incidental whitespace never affect a score. BLEU is the standard clipped
modified n-gram precision with brevity penalty; orders longer than the
candidate are skipped so an exact match always scores 1.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .kg import normalize_name

logger = logging.getLogger(__name__)

BLEU_EPS = 1e-9


@dataclass
class GoldEntity:
    """A gold entity of one benchmark instance with its curated set of valid
    target-language names."""

    entity_id: str
    names_tgt: list[str]

    def __post_init__(self):
        if not self.names_tgt:
            raise ValueError(f"gold entity {self.entity_id!r} has an empty name set")
        if any(not n.strip() for n in self.names_tgt):
            raise ValueError(f"gold entity {self.entity_id!r} has an empty name string")


@dataclass
class BenchmarkInstance:
    source: str
    references: list[str]
    entities: list[GoldEntity] = field(default_factory=list)

    def __post_init__(self):
        if not self.references:
            raise ValueError("benchmark instance must carry at least one reference")


def entity_match(translation: str, names: Sequence[str], strict: bool = False) -> int:
    """1 iff any curated name occurs in the translation (both normalized),
    capped at 1 however many names occur. With strict=True the match must
    fall on token boundaries instead of being a plain substring."""
    t = normalize_name(translation)
    hits = 0
    for name in names:
        n = normalize_name(name)
        if not n:
            continue
        if strict:
            padded = f" {t} "
            if f" {n} " in padded:
                hits += 1
        elif n in t:
            hits += 1
    return min(1, hits)


def m_eta_instance(translation: str, golds: Sequence[GoldEntity], strict: bool = False) -> float:
    """Mean per-entity match over the instance's gold entities."""
    if not golds:
        raise ValueError("m_eta_instance needs a non-empty gold entity set")
    return sum(entity_match(translation, g.names_tgt, strict) for g in golds) / len(golds)


def m_eta_corpus(pairs: Sequence[tuple[str, Sequence[GoldEntity]]], strict: bool = False,
                 micro: bool = False) -> float:
    """Corpus score: unweighted mean of instance scores (or a micro-average
    over entities). Instances without gold entities are skipped and counted."""
    skipped = 0
    num = 0.0
    den = 0
    for translation, golds in pairs:
        if not golds:
            skipped += 1
            continue
        if micro:
            num += sum(entity_match(translation, g.names_tgt, strict) for g in golds)
            den += len(golds)
        else:
            num += m_eta_instance(translation, golds, strict)
            den += 1
    if den == 0:
        raise ValueError("no instance with a non-empty gold entity set")
    if skipped:
        logger.info("m_eta_corpus: skipped %d instances without gold entities", skipped)
    return num / den


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(c: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - c), r))


def _bleu_stats(candidate: str, references: Sequence[str], max_n: int):
    """Per-sentence counts: (clipped matches, totals) per order, candidate
    length, closest reference length."""
    cand = candidate.split()
    refs = [r.split() for r in references]
    clipped = [0] * max_n
    totals = [0] * max_n
    for n in range(1, max_n + 1):
        counts = _ngram_counts(cand, n)
        if not counts:
            continue
        max_ref: Counter = Counter()
        for ref in refs:
            for gram, cnt in _ngram_counts(ref, n).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        clipped[n - 1] = sum(min(cnt, max_ref[gram]) for gram, cnt in counts.items())
        totals[n - 1] = sum(counts.values())
    return clipped, totals, len(cand), _closest_ref_len(len(cand), [len(r) for r in refs])


def _bleu_from_stats(clipped: Sequence[int], totals: Sequence[int], c: int, r: int) -> float:
    if c == 0:
        return 0.0
    logs = []
    for match, total in zip(clipped, totals):
        if total == 0:
            continue  # no n-grams of this order anywhere in the candidates
        logs.append(math.log((match if match > 0 else BLEU_EPS) / total))
    if not logs:
        return 0.0
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(logs) / len(logs))


def bleu(candidate: str, references: Sequence[str], max_n: int = 4) -> float:
    """Sentence BLEU in [0, 1]: clipped precisions (max over references),
    geometric mean over available orders with epsilon smoothing for zero
    counts, times the brevity penalty against the closest reference length."""
    if not references:
        raise ValueError("bleu needs at least one reference")
    clipped, totals, c, r = _bleu_stats(candidate, references, max_n)
    return _bleu_from_stats(clipped, totals, c, r)


def corpus_bleu(pairs: Sequence[tuple[str, Sequence[str]]], max_n: int = 4) -> float:
    """Corpus BLEU: n-gram and length statistics pooled over all pairs."""
    if not pairs:
        raise ValueError("corpus_bleu needs at least one candidate/references pair")
    agg_clipped = [0] * max_n
    agg_totals = [0] * max_n
    agg_c = 0
    agg_r = 0
    for candidate, references in pairs:
        if not references:
            raise ValueError("every instance needs at least one reference")
        clipped, totals, c, r = _bleu_stats(candidate, references, max_n)
        for i in range(max_n):
            agg_clipped[i] += clipped[i]
            agg_totals[i] += totals[i]
        agg_c += c
        agg_r += r
    return _bleu_from_stats(agg_clipped, agg_totals, agg_c, agg_r)


@dataclass
class EvalReport:
    m_eta: float
    bleu: float
    n_instances: int
    n_entity_instances: int
    per_instance: list[Optional[float]]
    hits: Optional[dict[int, float]] = None

    def to_dict(self) -> dict:
        return {
            "m_eta": self.m_eta,
            "bleu": self.bleu,
            "n_instances": self.n_instances,
            "n_entity_instances": self.n_entity_instances,
            "hits": None if self.hits is None else {str(k): v for k, v in sorted(self.hits.items())},
            "per_instance": [{"index": i, "m_eta": q} for i, q in enumerate(self.per_instance)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        per = [row["m_eta"] for row in d["per_instance"]]
        hits = d.get("hits")
        return cls(m_eta=d["m_eta"], bleu=d["bleu"], n_instances=d["n_instances"],
                   n_entity_instances=d["n_entity_instances"], per_instance=per,
                   hits=None if hits is None else {int(k): v for k, v in hits.items()})

    @classmethod
    def from_json(cls, s: str) -> "EvalReport":
        return cls.from_dict(json.loads(s))


def evaluate_run(outputs: Sequence[str], benchmark: Sequence[BenchmarkInstance],
                 hits: Optional[dict[int, float]] = None, strict: bool = False) -> EvalReport:
    """Score aligned system outputs against a benchmark: corpus entity
    accuracy over entity-bearing instances, corpus BLEU over everything."""
    if len(outputs) != len(benchmark):
        raise ValueError(f"misaligned outputs: {len(outputs)} outputs for "
                         f"{len(benchmark)} benchmark instances (first mismatch at index "
                         f"{min(len(outputs), len(benchmark))})")
    per_instance: list[Optional[float]] = []
    meta_pairs = []
    for out, inst in zip(outputs, benchmark):
        if inst.entities:
            q = m_eta_instance(out, inst.entities, strict)
            per_instance.append(q)
            meta_pairs.append(q)
        else:
            per_instance.append(None)
    score = sum(meta_pairs) / len(meta_pairs) if meta_pairs else 0.0
    bleu_score = corpus_bleu([(out, inst.references) for out, inst in zip(outputs, benchmark)])
    return EvalReport(m_eta=score, bleu=bleu_score, n_instances=len(benchmark),
                      n_entity_instances=len(meta_pairs), per_instance=per_instance, hits=hits)
