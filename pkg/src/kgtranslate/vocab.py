"""Whitespace vocabulary with reserved control tokens.

The synthetic corpora are whitespace-clean, so tokenization is a plain split
with UNK fallback. Reserved ids cover padding, sequence delimiters, the
knowledge marker used for explicit integration, the arrow/separator tokens of
the name-pair serialization, and one tag token per language.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

PAD = "[PAD]"
UNK = "[UNK]"
BOS = "[BOS]"
EOS = "[EOS]"
KG_MARK = "[KG]"
ARROW = "→"  # → between a source name and its target name
PAIR_SEP = ";"  # between consecutive name pairs

RESERVED = (PAD, UNK, BOS, EOS, KG_MARK, ARROW, PAIR_SEP)


def lang_tag(lang: str) -> str:
    return f"<lang:{lang}>"


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    _id_to_token: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be contiguous from 0")
        for tok in RESERVED:
            if tok not in self.token_to_id:
                raise ValueError(f"reserved token {tok!r} missing from vocabulary")
        self._id_to_token = [""] * len(self.token_to_id)
        for tok, i in self.token_to_id.items():
            self._id_to_token[i] = tok

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, self.token_to_id[UNK])

    def token(self, i: int) -> str:
        return self._id_to_token[i]

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def kg_id(self) -> int:
        return self.token_to_id[KG_MARK]

    @property
    def arrow_id(self) -> int:
        return self.token_to_id[ARROW]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[PAIR_SEP]

    def lang_id(self, lang: str) -> int:
        tag = lang_tag(lang)
        if tag not in self.token_to_id:
            raise ValueError(f"no tag token for language {lang!r} in vocabulary")
        return self.token_to_id[tag]

    @classmethod
    def build(cls, texts: Iterable[str], languages: Iterable[str] = ()) -> "Vocabulary":
        """Deterministic vocabulary: reserved tokens, then one tag per
        language, then all whitespace tokens of `texts` in sorted order."""
        words: set[str] = set()
        for text in texts:
            words.update(text.split())
        tokens = list(RESERVED) + [lang_tag(l) for l in sorted(set(languages))]
        seen = set(tokens)
        for w in sorted(words):
            if w not in seen:
                tokens.append(w)
                seen.add(w)
        return cls({tok: i for i, tok in enumerate(tokens)})

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.token_to_id, fh, ensure_ascii=False, indent=0, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))


def tokenize(s: str, vocab: Vocabulary, max_len: int) -> list[int]:
    """Whitespace-split ids wrapped in BOS/EOS, truncated to `max_len` while
    keeping both delimiters (the tail of the text is dropped first)."""
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    ids = [vocab.id(w) for w in s.split()]
    ids = ids[: max_len - 2]
    return [vocab.bos_id] + ids + [vocab.eos_id]


def detokenize(ids: Iterable[int], vocab: Vocabulary) -> str:
    """Inverse of tokenize for display: stops at EOS, skips control padding
    and delimiters, keeps everything else verbatim."""
    words = []
    skip = {vocab.pad_id, vocab.bos_id}
    for i in ids:
        if i == vocab.eos_id:
            break
        if i in skip:
            continue
        words.append(vocab.token(i))
    return " ".join(words)
