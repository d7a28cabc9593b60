"""Core value types: vocabularies, class signatures and relation distributions.

All types here are immutable after construction and safe to share across
threads. Distributions are kept sparse: a relation with zero mass is simply
absent, which is what makes support-based set metrics well defined.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import EmptyUsageError

# Tolerance used whenever a distribution is checked for summing to one.
SUM_TOLERANCE = 1e-9

_BAD_ID_CHARS = re.compile(r"[\t\n\r\x0b\x0c]")


def validate_identifier(identifier: str, what: str = "identifier") -> str:
    """Check that an id is a non-empty string free of whitespace control chars."""
    if not isinstance(identifier, str) or not identifier:
        raise ValueError(f"{what} must be a non-empty string, got {identifier!r}")
    if _BAD_ID_CHARS.search(identifier):
        raise ValueError(f"{what} {identifier!r} contains whitespace control characters")
    return identifier


def stable_hash(text: str, seed: int = 0) -> int:
    """Deterministic 64-bit hash of ``text`` mixed with ``seed``.

    Unlike the builtin ``hash`` this is stable across processes and platforms,
    which is what keeps fold assignment and derived seeds reproducible.
    """
    key = int(seed).to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class Vocabulary:
    """Ordered class and relation id lists with dense integer indices.

    Index positions are stable for the lifetime of any model trained against
    the vocabulary. ``from_ids`` builds a canonical (lexicographically sorted)
    vocabulary, which makes downstream artifacts independent of input order.
    """

    classes: tuple[str, ...]
    relations: tuple[str, ...]
    _class_index: dict = field(repr=False, compare=False, default=None)
    _relation_index: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if not self.classes or not self.relations:
            raise ValueError("vocabulary needs at least one class and one relation")
        for c in self.classes:
            validate_identifier(c, "class id")
        for r in self.relations:
            validate_identifier(r, "relation id")
        class_index = {c: i for i, c in enumerate(self.classes)}
        relation_index = {r: i for i, r in enumerate(self.relations)}
        if len(class_index) != len(self.classes):
            raise ValueError("duplicate class ids in vocabulary")
        if len(relation_index) != len(self.relations):
            raise ValueError("duplicate relation ids in vocabulary")
        object.__setattr__(self, "_class_index", class_index)
        object.__setattr__(self, "_relation_index", relation_index)

    @classmethod
    def from_ids(cls, classes: Iterable[str], relations: Iterable[str]) -> "Vocabulary":
        """Build a canonical vocabulary with ids sorted lexicographically."""
        return cls(tuple(sorted(set(classes))), tuple(sorted(set(relations))))

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def class_index(self, class_id: str) -> int:
        return self._class_index[class_id]

    def relation_index(self, relation_id: str) -> int:
        return self._relation_index[relation_id]

    def has_class(self, class_id: str) -> bool:
        return class_id in self._class_index

    def has_relation(self, relation_id: str) -> bool:
        return relation_id in self._relation_index

    def signature_of(self, class_ids: Iterable[str], drop_unknown: bool = False) -> "ClassSignature":
        """Intern a set of class ids into a signature over this vocabulary.

        With ``drop_unknown`` unset, an unknown class id raises ``KeyError``.
        """
        indices = []
        for c in class_ids:
            idx = self._class_index.get(c)
            if idx is None:
                if drop_unknown:
                    continue
                raise KeyError(f"class id {c!r} not in vocabulary")
            indices.append(idx)
        return ClassSignature.from_indices(indices)

    def signature_ids(self, signature: "ClassSignature") -> tuple[str, ...]:
        return tuple(self.classes[i] for i in signature.classes)


@dataclass(frozen=True)
class ClassSignature:
    """Sorted, duplicate-free set of class indices into a Vocabulary.

    Two signatures are equal iff their index sets are equal. Always non-empty.
    """

    classes: tuple[int, ...]

    def __post_init__(self):
        if not self.classes:
            raise ValueError("class signature must not be empty")
        if any(i < 0 for i in self.classes):
            raise ValueError("class indices must be non-negative")
        ordered = tuple(sorted(set(self.classes)))
        if ordered != self.classes:
            raise ValueError("class indices must be sorted ascending without duplicates")

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "ClassSignature":
        return cls(tuple(sorted(set(int(i) for i in indices))))

    def __len__(self) -> int:
        return len(self.classes)

    def __iter__(self):
        return iter(self.classes)

    def canonical_key(self, vocab: Vocabulary) -> str:
        """Order-independent string key built from class id strings.

        Used for seeded fold hashing; sorted lexicographically so the key does
        not depend on the vocabulary's index order. Safe to join on newline
        because identifiers cannot contain whitespace control characters.
        """
        return "\n".join(sorted(vocab.classes[i] for i in self.classes))


@dataclass(frozen=True)
class RelationDistribution:
    """Sparse mapping relation-index -> positive proportion.

    Proportions sum to 1 (within ``SUM_TOLERANCE``) unless the distribution is
    marked ``truncated``, in which case the retained mass may be below one.
    ``flag`` carries prediction-quality markers ("degenerate", "fallback",
    "out_of_vocabulary") set by the models; None means a normal prediction.
    """

    entries: Mapping[int, float]
    truncated: bool = False
    flag: Optional[str] = None

    def __post_init__(self):
        if not self.entries:
            raise EmptyUsageError("relation distribution must have at least one entry")
        total = 0.0
        for idx, p in self.entries.items():
            if not isinstance(idx, int) or idx < 0:
                raise ValueError(f"relation index must be a non-negative int, got {idx!r}")
            if not math.isfinite(p) or p <= 0.0:
                raise ValueError(f"proportion for relation {idx} must be finite and > 0, got {p}")
            total += p
        if self.truncated:
            if total > 1.0 + SUM_TOLERANCE:
                raise ValueError(f"truncated distribution mass {total} exceeds 1")
        elif abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"distribution mass {total} not within {SUM_TOLERANCE} of 1")

    @property
    def support(self) -> frozenset:
        return frozenset(self.entries)

    @property
    def mass(self) -> float:
        return sum(self.entries.values())

    def get(self, index: int, default: float = 0.0) -> float:
        return self.entries.get(index, default)

    def items(self):
        return self.entries.items()

    def __len__(self) -> int:
        return len(self.entries)

    def to_id_dict(self, vocab: Vocabulary) -> dict:
        """Render entries keyed by relation id strings (sorted for stable output)."""
        return {vocab.relations[i]: p for i, p in sorted(self.entries.items(), key=lambda kv: vocab.relations[kv[0]])}


def normalize(counts: Mapping[int, float]) -> RelationDistribution:
    """Normalize raw relation counts into a RelationDistribution.

    Zero-count relations are dropped; an all-zero (or empty) input raises
    :class:`EmptyUsageError`. Counts must be non-negative.
    """
    for idx, c in counts.items():
        if c < 0:
            raise ValueError(f"count for relation {idx} is negative: {c}")
    total = float(sum(counts.values()))
    if total <= 0.0:
        raise EmptyUsageError("cannot normalize: no positive counts")
    return RelationDistribution({int(i): c / total for i, c in counts.items() if c > 0})


def truncate_to_mass(
    dist: RelationDistribution,
    threshold: float,
    vocab: Optional[Vocabulary] = None,
) -> RelationDistribution:
    """Keep the smallest high-proportion prefix whose cumulative mass >= threshold.

    Relations are ranked by descending proportion; ties break on ascending
    relation id string when a vocabulary is given, else on ascending index
    (identical orders for canonically sorted vocabularies). Retained
    proportions keep their original values and the result is marked truncated.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if vocab is not None:
        order = sorted(dist.entries.items(), key=lambda kv: (-kv[1], vocab.relations[kv[0]]))
    else:
        order = sorted(dist.entries.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = {}
    cum = 0.0
    for idx, p in order:
        kept[idx] = p
        cum += p
        # small slack so e.g. 0.5+0.3+0.15 trips a 0.95 threshold despite rounding
        if cum >= threshold - 1e-12:
            break
    return RelationDistribution(kept, truncated=True, flag=dist.flag)


@dataclass(frozen=True)
class UsageAggregate:
    """Raw clause counts grouped by class signature (and optionally entity).

    Keys are identifier strings rather than vocabulary indices: the vocabulary
    is only constructed after min-support filtering, downstream of this type.
    ``per_signature`` maps a frozenset of class ids to (relation-id counts,
    total); ``per_entity`` optionally retains the same shape per entity.
    """

    per_signature: Mapping[frozenset, tuple]
    per_entity: Optional[Mapping[str, tuple]] = None

    def __post_init__(self):
        for sig, (counts, total) in self.per_signature.items():
            if total != sum(counts.values()):
                raise ValueError(f"total {total} does not match counts for signature {sorted(sig)}")
            if any(c < 0 for c in counts.values()):
                raise ValueError(f"negative count in signature {sorted(sig)}")
