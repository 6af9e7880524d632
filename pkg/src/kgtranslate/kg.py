"""Multilingual knowledge graph store.

Entities carry per-language name lists (first entry is the primary name) and
optional per-language descriptions. A normalized-name index supports homonym
lookup for hard-negative mining and entity-name matching in the metrics.
The graph is immutable after loading; re-index by reloading.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

logger = logging.getLogger(__name__)

LANG_CODE_RE = re.compile(r"^[a-z0-9-]{2,8}$")


def is_language_code(code: str) -> bool:
    return bool(LANG_CODE_RE.match(code))


def normalize_name(s: str) -> str:
    """Canonical form used for indexing and name matching.

    NFC composition, case folding, whitespace collapsed to single spaces and
    stripped. Original surface forms are kept on the entities; only lookups
    and comparisons go through this.
    """
    s = unicodedata.normalize("NFC", s).casefold()
    # casefold can introduce decomposable sequences, so compose once more
    s = unicodedata.normalize("NFC", s)
    return " ".join(s.split())


@dataclass(frozen=True, eq=False)
class Entity:
    """One entity: unique id, names per language, descriptions per language.

    Identity follows the id (unique within a graph), so entities are hashable
    and usable in sets even though the payload holds dicts.
    """

    id: str
    names: dict[str, list[str]]
    descriptions: dict[str, str]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Entity) and other.id == self.id

    def __hash__(self) -> int:
        return hash(self.id)

    def primary_name(self, lang: str) -> str:
        try:
            return self.names[lang][0]
        except KeyError:
            raise ValueError(f"entity {self.id!r} has no name in language {lang!r}") from None

    def all_names(self, lang: str) -> list[str]:
        return list(self.names.get(lang, []))


@dataclass
class KnowledgeGraph:
    """Validated entity store with a per-language normalized-name index."""

    entities: dict[str, Entity]
    relations: list[tuple[str, str, str]] = field(default_factory=list)
    name_index: dict[str, dict[str, set[str]]] = field(default_factory=dict)
    n_dropped: int = 0

    def __len__(self) -> int:
        return len(self.entities)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.entities

    def get(self, entity_id: str) -> Entity:
        return self.entities[entity_id]

    def lookup(self, lang: str, name: str) -> set[str]:
        """Entity ids carrying `name` in `lang` (normalized match)."""
        return set(self.name_index.get(lang, {}).get(normalize_name(name), ()))

    def ids_with_language(self, lang: str) -> list[str]:
        return sorted(eid for eid, e in self.entities.items() if lang in e.names)


def entity_text(e: Entity, lang: str) -> str:
    """Textualization fed to the encoder: "name: description", or the name
    alone when the entity has no description in that language."""
    name = e.primary_name(lang)
    desc = e.descriptions.get(lang)
    if desc:
        return f"{name}: {desc}"
    return name


def homonyms_of(kg: KnowledgeGraph, e: Entity, lang: str) -> set[Entity]:
    """All other entities sharing at least one normalized name with `e` in
    `lang`. Empty set when the entity's names are unique."""
    index = kg.name_index.get(lang, {})
    out: set[Entity] = set()
    for name in e.names.get(lang, ()):
        for eid in index.get(normalize_name(name), ()):
            if eid != e.id:
                out.add(kg.entities[eid])
    return out


def _build_name_index(entities: dict[str, Entity]) -> dict[str, dict[str, set[str]]]:
    index: dict[str, dict[str, set[str]]] = {}
    for eid, e in entities.items():
        for lang, names in e.names.items():
            per_lang = index.setdefault(lang, {})
            for name in names:
                per_lang.setdefault(normalize_name(name), set()).add(eid)
    return index


def _parse_entity(obj: dict, where: str) -> tuple[Entity, list[tuple[str, str, str]]]:
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: expected a JSON object")
    eid = obj.get("id")
    if not isinstance(eid, str) or not eid:
        raise ValueError(f"{where}: missing or empty 'id'")
    raw_names = obj.get("names")
    if not isinstance(raw_names, dict) or not raw_names:
        raise ValueError(f"{where}: entity {eid!r} has no 'names' map")
    names: dict[str, list[str]] = {}
    for lang, lst in raw_names.items():
        if not is_language_code(lang):
            raise ValueError(f"{where}: bad language code {lang!r} on entity {eid!r}")
        if not isinstance(lst, list) or not lst:
            raise ValueError(f"{where}: empty name list for {eid!r}/{lang}")
        for name in lst:
            if not isinstance(name, str) or not name.strip():
                raise ValueError(f"{where}: empty name on entity {eid!r} in {lang!r}")
        names[lang] = list(lst)
    raw_desc = obj.get("descriptions", {})
    if not isinstance(raw_desc, dict):
        raise ValueError(f"{where}: 'descriptions' must be a map on entity {eid!r}")
    descriptions: dict[str, str] = {}
    for lang, desc in raw_desc.items():
        if not is_language_code(lang):
            raise ValueError(f"{where}: bad language code {lang!r} on entity {eid!r}")
        if not isinstance(desc, str):
            raise ValueError(f"{where}: description for {eid!r}/{lang} must be a string")
        descriptions[lang] = desc
    relations: list[tuple[str, str, str]] = []
    for triple in obj.get("relations", []) or []:
        if not (isinstance(triple, (list, tuple)) and len(triple) == 3):
            raise ValueError(f"{where}: malformed relation triple on entity {eid!r}")
        relations.append((str(triple[0]), str(triple[1]), str(triple[2])))
    return Entity(id=eid, names=names, descriptions=descriptions), relations


def load_kg(path: str | Path, language_filter: Optional[Iterable[str]] = None) -> KnowledgeGraph:
    """Load a JSONL knowledge graph file (one entity object per line).

    With a language filter, name/description maps are restricted to the given
    languages and entities left without any name are dropped (count reported).
    Raises ValueError with the offending line number on malformed input,
    duplicate ids, or empty names.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"knowledge graph file not found: {path}")
    filt = set(language_filter) if language_filter is not None else None

    all_entities: dict[str, Entity] = {}
    all_relations: list[tuple[str, str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{where}: malformed JSON ({exc.msg})") from exc
            entity, relations = _parse_entity(obj, where)
            if entity.id in all_entities:
                raise ValueError(f"{where}: duplicate entity id {entity.id!r}")
            all_entities[entity.id] = entity
            all_relations.extend(relations)

    for s, r, o in all_relations:
        if s not in all_entities or o not in all_entities:
            raise ValueError(f"{path}: relation ({s!r}, {r!r}, {o!r}) references an unknown entity id")

    dropped = 0
    if filt is not None:
        kept: dict[str, Entity] = {}
        for eid, e in all_entities.items():
            names = {lang: lst for lang, lst in e.names.items() if lang in filt}
            if not names:
                dropped += 1
                continue
            descriptions = {lang: d for lang, d in e.descriptions.items() if lang in filt}
            kept[eid] = Entity(id=eid, names=names, descriptions=descriptions)
        entities = kept
        relations = [t for t in all_relations if t[0] in entities and t[2] in entities]
        if dropped:
            logger.warning("load_kg: dropped %d entities lacking all filtered languages", dropped)
    else:
        entities = all_entities
        relations = all_relations

    return KnowledgeGraph(
        entities=entities,
        relations=relations,
        name_index=_build_name_index(entities),
        n_dropped=dropped,
    )


def save_kg(kg: KnowledgeGraph, path: str | Path) -> None:
    """Serialize back to the JSONL schema, entities sorted by id."""
    relations_by_subject: dict[str, list[tuple[str, str, str]]] = {}
    for triple in kg.relations:
        relations_by_subject.setdefault(triple[0], []).append(triple)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for eid in sorted(kg.entities):
            e = kg.entities[eid]
            obj: dict = {"id": e.id, "names": e.names, "descriptions": e.descriptions}
            rels = relations_by_subject.get(eid)
            if rels:
                obj["relations"] = [list(t) for t in rels]
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
