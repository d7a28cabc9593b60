"""Demand-weighted completeness of entities and KB subsets, with gap targeting.

An entity's score is the sum of the predicted (truncated) relation
proportions it already has facts for; whatever is missing, ranked by demand,
is the gap list. Subset scores are usage-weighted means, so fixing gaps for
heavily queried entities moves the number most.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .core import truncate_to_mass
from .errors import ConfigError, UnknownEntityError
from .ingestion import KbSnapshot
from .models import PredictorModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EntityCompleteness:
    """Score plus the demand-ranked missing relations for one entity."""

    entity: str
    score: float
    truncated_mass: float
    missing: tuple  # ((relation_id, proportion), ...) ranked by proportion desc
    flag: Optional[str] = None

    @property
    def missing_mass(self) -> float:
        return sum(p for _, p in self.missing)


@dataclass(frozen=True)
class GapEntry:
    """Aggregate demand mass missing for one relation across a subset."""

    relation: str
    missing_mass: float
    completeness_delta: float
    n_entities: int


@dataclass(frozen=True)
class CompletenessReport:
    """Per-entity scores, the usage-weighted subset score, and the gap ranking."""

    per_entity: tuple
    subset_score: float
    threshold: float
    total_weight: float
    gaps: tuple = ()

    def entity(self, entity_id: str) -> EntityCompleteness:
        for item in self.per_entity:
            if item.entity == entity_id:
                return item
        raise UnknownEntityError(f"entity {entity_id!r} not in report")


def entity_completeness(
    model: PredictorModel,
    kb: KbSnapshot,
    entity_id: str,
    threshold: float = 0.95,
) -> EntityCompleteness:
    """Score one entity against the demand its class signature predicts.

    Predicts from the entity's classes, truncates to ``threshold``, and sums
    the proportions of predicted relations the entity already has. ``missing``
    lists the rest, by proportion descending (ties on relation id).
    """
    facts = kb.get(entity_id)
    if facts is None:
        raise UnknownEntityError(f"entity {entity_id!r} not in KB snapshot")
    prediction = model.predict_for_classes(facts.classes)
    truncated = truncate_to_mass(prediction, threshold, model.vocabulary)
    score = 0.0
    missing = []
    for idx, proportion in truncated.items():
        relation_id = model.vocabulary.relations[idx]
        if relation_id in facts.relations:
            score += proportion
        else:
            missing.append((relation_id, proportion))
    missing.sort(key=lambda pair: (-pair[1], pair[0]))
    return EntityCompleteness(
        entity=entity_id,
        score=score,
        truncated_mass=truncated.mass,
        missing=tuple(missing),
        flag=prediction.flag,
    )


def _entity_weights(
    entities: Sequence[str],
    usage: Mapping[str, float],
    zero_usage_weight: float = 0.0,
) -> dict:
    weights = {}
    for e in entities:
        w = float(usage.get(e, 0.0))
        if w <= 0.0:
            w = zero_usage_weight
        if w > 0.0:
            weights[e] = w
    return weights


def subset_completeness(
    model: PredictorModel,
    kb: KbSnapshot,
    entities: Sequence[str],
    usage: Mapping[str, float],
    threshold: float = 0.95,
    zero_usage_weight: float = 0.0,
) -> float:
    """Usage-weighted mean of entity scores over a subset.

    Entities without usage get ``zero_usage_weight`` (default 0: excluded).
    Raises :class:`ConfigError` when every weight is zero.
    """
    if not entities:
        raise ConfigError("subset_completeness needs a non-empty entity list")
    weights = _entity_weights(entities, usage, zero_usage_weight)
    if not weights:
        raise ConfigError("all entity weights are zero; nothing to aggregate")
    total = sum(weights.values())
    score = 0.0
    for e, w in weights.items():
        score += w * entity_completeness(model, kb, e, threshold).score
    return score / total


def gap_report(
    model: PredictorModel,
    kb: KbSnapshot,
    entities: Sequence[str],
    usage: Mapping[str, float],
    threshold: float = 0.95,
    top_k: int = 20,
    zero_usage_weight: float = 0.0,
) -> list:
    """Rank relations by the usage-weighted demand mass they are missing.

    For every (entity, missing relation, proportion) the relation accumulates
    ``weight * proportion``. Adding all facts for a listed relation raises
    :func:`subset_completeness` by exactly ``missing_mass / total_weight``,
    reported as ``completeness_delta``. ``top_k = 0`` returns an empty list.
    """
    if top_k < 0:
        raise ConfigError(f"top_k must be >= 0, got {top_k}")
    weights = _entity_weights(entities, usage, zero_usage_weight)
    if not weights:
        raise ConfigError("all entity weights are zero; nothing to aggregate")
    total = sum(weights.values())
    mass: dict = {}
    touched: dict = {}
    for e, w in weights.items():
        result = entity_completeness(model, kb, e, threshold)
        for relation_id, proportion in result.missing:
            mass[relation_id] = mass.get(relation_id, 0.0) + w * proportion
            touched[relation_id] = touched.get(relation_id, 0) + 1
    ranked = sorted(mass.items(), key=lambda pair: (-pair[1], pair[0]))
    return [
        GapEntry(
            relation=relation_id,
            missing_mass=missing_mass,
            completeness_delta=missing_mass / total,
            n_entities=touched[relation_id],
        )
        for relation_id, missing_mass in ranked[:top_k]
    ]


def completeness_report(
    model: PredictorModel,
    kb: KbSnapshot,
    entities: Sequence[str],
    usage: Mapping[str, float],
    threshold: float = 0.95,
    top_k: int = 20,
    zero_usage_weight: float = 0.0,
) -> CompletenessReport:
    """One pass producing per-entity scores, the subset score and the gap ranking."""
    if not entities:
        raise ConfigError("completeness_report needs a non-empty entity list")
    weights = _entity_weights(entities, usage, zero_usage_weight)
    if not weights:
        raise ConfigError("all entity weights are zero; nothing to aggregate")
    total = sum(weights.values())
    per_entity = []
    subset = 0.0
    mass: dict = {}
    touched: dict = {}
    for e in entities:
        w = weights.get(e)
        if w is None:
            continue
        result = entity_completeness(model, kb, e, threshold)
        per_entity.append(result)
        subset += w * result.score
        for relation_id, proportion in result.missing:
            mass[relation_id] = mass.get(relation_id, 0.0) + w * proportion
            touched[relation_id] = touched.get(relation_id, 0) + 1
    ranked = sorted(mass.items(), key=lambda pair: (-pair[1], pair[0]))
    gaps = tuple(
        GapEntry(
            relation=relation_id,
            missing_mass=missing_mass,
            completeness_delta=missing_mass / total,
            n_entities=touched[relation_id],
        )
        for relation_id, missing_mass in ranked[:top_k]
    )
    return CompletenessReport(
        per_entity=tuple(per_entity),
        subset_score=subset / total,
        threshold=threshold,
        total_weight=total,
        gaps=gaps,
    )
