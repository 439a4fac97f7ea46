"""Extraction payloads shared by the store, reward engine, tools and episodes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

__all__ = ["Triple", "ExtractionResult", "parse_extraction", "ExtractionFormatError"]


class ExtractionFormatError(ValueError):
    """Raised when a wire payload does not have the extraction shape."""


@dataclass(frozen=True)
class Triple:
    subject: str
    object: str
    confidence: float | None = None


@dataclass
class ExtractionResult:
    """Entities grouped by type and relation triples grouped by relation type."""

    entities: dict[str, list[str]] = field(default_factory=dict)
    relations: dict[str, list[Triple]] = field(default_factory=dict)

    def entity_items(self) -> set[tuple[str, str]]:
        return {(etype, name) for etype, names in self.entities.items() for name in names}

    def relation_items(self) -> set[tuple[str, str, str]]:
        return {
            (rtype, t.subject, t.object)
            for rtype, triples in self.relations.items()
            for t in triples
        }

    def entity_count(self) -> int:
        return sum(len(v) for v in self.entities.values())

    def relation_count(self) -> int:
        return sum(len(v) for v in self.relations.values())

    def item_count(self) -> int:
        return self.entity_count() + self.relation_count()

    def type_of(self, name: str) -> str | None:
        """First entity type listing `name`, in insertion order."""
        for etype, names in self.entities.items():
            if name in names:
                return etype
        return None

    def to_wire(self) -> dict[str, Any]:
        return {
            "entities": {etype: list(names) for etype, names in self.entities.items()},
            "relations": {
                rtype: [{"subject": t.subject, "object": t.object} for t in triples]
                for rtype, triples in self.relations.items()
            },
        }


def parse_extraction(obj: Mapping[str, Any], default_confidence: float | None = None) -> ExtractionResult:
    """Parse the wire shape {entities: {type: [name]}, relations: {type: [{subject, object}]}}."""
    if not isinstance(obj, Mapping):
        raise ExtractionFormatError("extraction must be an object")
    entities_raw = obj.get("entities", {})
    relations_raw = obj.get("relations", {})
    if not isinstance(entities_raw, Mapping) or not isinstance(relations_raw, Mapping):
        raise ExtractionFormatError("entities and relations must be objects keyed by type")
    entities: dict[str, list[str]] = {}
    for etype, names in entities_raw.items():
        if not isinstance(etype, str) or not isinstance(names, Iterable) or isinstance(names, (str, bytes)):
            raise ExtractionFormatError(f"bad entity list for type {etype!r}")
        out = []
        for name in names:
            if not isinstance(name, str):
                raise ExtractionFormatError(f"entity name must be a string, got {name!r}")
            out.append(name)
        entities[etype] = out
    relations: dict[str, list[Triple]] = {}
    for rtype, triples in relations_raw.items():
        if not isinstance(rtype, str) or not isinstance(triples, Iterable) or isinstance(triples, (str, bytes)):
            raise ExtractionFormatError(f"bad relation list for type {rtype!r}")
        out_t = []
        for t in triples:
            if not isinstance(t, Mapping) or "subject" not in t or "object" not in t:
                raise ExtractionFormatError(f"relation entry must have subject and object: {t!r}")
            subj, obj_ = t["subject"], t["object"]
            if not isinstance(subj, str) or not isinstance(obj_, str):
                raise ExtractionFormatError("relation subject/object must be strings")
            conf = t.get("confidence", default_confidence)
            if conf is not None:
                conf = float(conf)
            out_t.append(Triple(subject=subj, object=obj_, confidence=conf))
        relations[rtype] = out_t
    return ExtractionResult(entities=entities, relations=relations)
