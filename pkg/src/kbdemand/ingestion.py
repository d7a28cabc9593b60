"""NDJSON loaders for KB snapshots and query-usage logs.

Wire formats (UTF-8, one JSON object per line):

* usage log: ``{"entity": str, "relation": str, "count": int>=1?, "period": str?}``
* KB snapshot: ``{"entity": str, "classes": [str, ...] non-empty, "relations": [str, ...]}``

Clause attribution happens upstream: the log already carries bound
(entity, relation) pairs, one per query clause.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .core import validate_identifier
from .errors import FormatError, SchemaError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UsageRecord:
    """One attributed query clause (optionally pre-aggregated via ``count``)."""

    entity: str
    relation: str
    count: int = 1
    period: Optional[str] = None

    def __post_init__(self):
        validate_identifier(self.entity, "entity id")
        validate_identifier(self.relation, "relation id")
        if not isinstance(self.count, int) or self.count < 1:
            raise ValueError(f"count must be a positive integer, got {self.count!r}")


@dataclass(frozen=True)
class EntityFacts:
    """Class memberships and present relations for one KB entity."""

    classes: frozenset
    relations: frozenset

    def __post_init__(self):
        if not self.classes:
            raise SchemaError("entity must belong to at least one class")


@dataclass(frozen=True)
class KbSnapshot:
    """Immutable view of a KB: entity id -> (classes, present relations)."""

    entities: dict = field(default_factory=dict)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.entities

    def __len__(self) -> int:
        return len(self.entities)

    def get(self, entity_id: str) -> Optional[EntityFacts]:
        return self.entities.get(entity_id)


def _parse_usage_line(obj: dict) -> UsageRecord:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    entity = obj.get("entity")
    relation = obj.get("relation")
    if entity is None or relation is None:
        raise ValueError("missing required field 'entity' or 'relation'")
    count = obj.get("count", 1)
    if isinstance(count, bool) or not isinstance(count, int):
        raise ValueError(f"count must be an integer, got {count!r}")
    period = obj.get("period")
    if period is not None and not isinstance(period, str):
        raise ValueError(f"period must be a string, got {period!r}")
    return UsageRecord(entity=entity, relation=relation, count=count, period=period)


def load_usage_log(
    path,
    max_malformed_fraction: float = 0.01,
    malformed_out: Optional[list] = None,
) -> list:
    """Load a usage log, returning one UsageRecord per well-formed line.

    Malformed lines are skipped and collected as ``(line_number, reason)``
    pairs into ``malformed_out`` when given (always logged). If more than
    ``max_malformed_fraction`` of non-blank lines are malformed, a
    :class:`FormatError` naming the offending line numbers is raised.
    An empty file is valid and yields an empty list.
    """
    path = Path(path)
    records = []
    malformed = []
    n_lines = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            n_lines += 1
            try:
                records.append(_parse_usage_line(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as exc:
                malformed.append((lineno, str(exc)))
    if malformed:
        log.warning("%s: skipped %d malformed usage line(s)", path, len(malformed))
        if malformed_out is not None:
            malformed_out.extend(malformed)
        if n_lines and len(malformed) / n_lines > max_malformed_fraction:
            lines = [ln for ln, _ in malformed]
            raise FormatError(
                f"{path}: {len(malformed)} of {n_lines} lines malformed "
                f"(limit {max_malformed_fraction:.1%}); lines {lines[:20]}",
                lines=lines,
            )
    return records


def total_usage(records: Iterable[UsageRecord]) -> int:
    """Sum of record counts (one per clause, weighted lines already expanded)."""
    return sum(r.count for r in records)


def load_kb_snapshot(path) -> KbSnapshot:
    """Load a KB snapshot; duplicate entity lines merge by set union.

    An entity with an empty class list raises :class:`SchemaError` naming it.
    """
    path = Path(path)
    classes: dict = {}
    relations: dict = {}
    duplicates = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}", lines=[lineno])
            if not isinstance(obj, dict) or "entity" not in obj:
                raise FormatError(f"{path}:{lineno}: expected an object with an 'entity' field", lines=[lineno])
            entity = obj["entity"]
            validate_identifier(entity, "entity id")
            entity_classes = obj.get("classes") or []
            entity_relations = obj.get("relations") or []
            for c in entity_classes:
                validate_identifier(c, "class id")
            for r in entity_relations:
                validate_identifier(r, "relation id")
            if entity in classes:
                duplicates += 1
            classes.setdefault(entity, set()).update(entity_classes)
            relations.setdefault(entity, set()).update(entity_relations)
    if duplicates:
        log.warning("%s: merged %d duplicate entity line(s) by set union", path, duplicates)
    # check after merging so the outcome is insensitive to line order
    classless = sorted(e for e, cs in classes.items() if not cs)
    if classless:
        raise SchemaError(f"{path}: entity {classless[0]!r} has no classes")
    entities = {
        e: EntityFacts(classes=frozenset(classes[e]), relations=frozenset(relations[e]))
        for e in classes
    }
    return KbSnapshot(entities=entities)


def write_kb_snapshot(kb: KbSnapshot, path) -> None:
    """Write a snapshot back out in the NDJSON wire format (sorted, stable)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for entity in sorted(kb.entities):
            facts = kb.entities[entity]
            obj = {
                "entity": entity,
                "classes": sorted(facts.classes),
                "relations": sorted(facts.relations),
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_usage_log(records: Iterable[UsageRecord], path) -> None:
    """Write usage records in the NDJSON wire format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {"entity": rec.entity, "relation": rec.relation}
            if rec.count != 1:
                obj["count"] = rec.count
            if rec.period is not None:
                obj["period"] = rec.period
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
