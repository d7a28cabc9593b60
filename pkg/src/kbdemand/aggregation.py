"""Group usage records by class signature into per-signature relation distributions.

This is where raw (entity, relation, count) triples become the training rows
every predictor consumes: counts are summed per signature, normalized, and
optionally filtered by a minimum support. Fold assignment for grouped
cross-validation lives here too, keyed by a seeded stable hash so the split
never depends on row order.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .core import (
    ClassSignature,
    RelationDistribution,
    UsageAggregate,
    Vocabulary,
    normalize,
    stable_hash,
)
from .errors import ConfigError, EmptyDatasetError, FormatError
from .ingestion import KbSnapshot, UsageRecord

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignatureRow:
    """One dataset row: a signature with its raw counts and derived distribution."""

    signature: ClassSignature
    counts: Mapping[int, int]
    total: int
    observed: RelationDistribution = field(compare=False, default=None)

    def __post_init__(self):
        if self.total != sum(self.counts.values()):
            raise ValueError("row total does not match counts")
        if self.observed is None:
            object.__setattr__(self, "observed", normalize(self.counts))


@dataclass(frozen=True)
class SignatureDataset:
    """Unique signatures with observed relation distributions and usage totals.

    Rows are sorted by signature so that datasets built from permuted record
    streams compare equal. ``skipped_records`` counts usage records whose
    entity was absent from the KB snapshot.
    """

    vocabulary: Vocabulary
    rows: tuple
    min_support: int = 1
    skipped_records: int = 0

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            if row.signature in seen:
                raise ValueError("duplicate signature in dataset rows")
            seen.add(row.signature)
            if row.total < self.min_support:
                raise ValueError("row below min_support in dataset")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def total_usage(self) -> int:
        return sum(r.total for r in self.rows)

    def save(self, path) -> None:
        """Persist as NDJSON: ``{"classes": [...], "total": N, "relations": {id: count}}``."""
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for row in self.rows:
                obj = {
                    "classes": list(self.vocabulary.signature_ids(row.signature)),
                    "total": row.total,
                    "relations": {
                        self.vocabulary.relations[i]: c
                        for i, c in sorted(row.counts.items(), key=lambda kv: self.vocabulary.relations[kv[0]])
                    },
                }
                fh.write(json.dumps(obj, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path, min_support: int = 1) -> "SignatureDataset":
        """Load a persisted dataset, rebuilding the canonical vocabulary."""
        path = Path(path)
        raw = []
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}", lines=[lineno])
                if not isinstance(obj, dict) or "classes" not in obj or "relations" not in obj:
                    raise FormatError(
                        f"{path}:{lineno}: expected object with 'classes' and 'relations'", lines=[lineno]
                    )
                raw.append((frozenset(obj["classes"]), {str(k): int(v) for k, v in obj["relations"].items()}))
        return _dataset_from_signature_counts(raw, min_support=min_support)


def aggregate(
    records: Iterable[UsageRecord],
    kb: KbSnapshot,
    min_support: int = 1,
    keep_per_entity: bool = False,
) -> SignatureDataset:
    """Sum usage counts per class signature and normalize into a dataset.

    Records whose entity is missing from ``kb`` are skipped (counted, not
    fatal). Signatures whose total falls below ``min_support`` are dropped;
    the vocabulary covers exactly the classes and relations that survive.
    Raises :class:`EmptyDatasetError` when nothing survives.
    """
    usage, skipped = build_usage_aggregate(records, kb, keep_per_entity=keep_per_entity)
    return _dataset_from_signature_counts(
        [(sig, dict(counts)) for sig, (counts, _total) in usage.per_signature.items()],
        min_support=min_support,
        skipped_records=skipped,
    )


def build_usage_aggregate(
    records: Iterable[UsageRecord],
    kb: KbSnapshot,
    keep_per_entity: bool = False,
) -> tuple:
    """Accumulate raw clause counts keyed by class signature (id strings).

    Returns ``(UsageAggregate, skipped_record_count)``.
    """
    per_signature: dict = defaultdict(Counter)
    per_entity: dict = defaultdict(Counter) if keep_per_entity else None
    skipped = 0
    for rec in records:
        facts = kb.get(rec.entity)
        if facts is None:
            skipped += 1
            continue
        per_signature[facts.classes][rec.relation] += rec.count
        if per_entity is not None:
            per_entity[rec.entity][rec.relation] += rec.count
    if skipped:
        log.warning("aggregate: skipped %d record(s) for entities absent from the KB", skipped)
    agg = UsageAggregate(
        per_signature={sig: (dict(counts), sum(counts.values())) for sig, counts in per_signature.items()},
        per_entity=(
            {e: (dict(counts), sum(counts.values())) for e, counts in per_entity.items()}
            if per_entity is not None
            else None
        ),
    )
    return agg, skipped


def _dataset_from_signature_counts(
    sig_counts: list,
    min_support: int = 1,
    skipped_records: int = 0,
) -> SignatureDataset:
    """Build a SignatureDataset from (class-id set, relation-id counts) pairs."""
    merged: dict = {}
    for sig, counts in sig_counts:
        if sig in merged:
            for r, c in counts.items():
                merged[sig][r] = merged[sig].get(r, 0) + c
        else:
            merged[sig] = dict(counts)
    surviving = {
        sig: counts
        for sig, counts in merged.items()
        if sum(counts.values()) >= min_support and any(c > 0 for c in counts.values())
    }
    if not surviving:
        raise EmptyDatasetError(
            f"no signatures with usage total >= {min_support} (from {len(merged)} aggregated)"
        )
    classes = set()
    relations = set()
    for sig, counts in surviving.items():
        classes.update(sig)
        relations.update(r for r, c in counts.items() if c > 0)
    vocab = Vocabulary.from_ids(classes, relations)
    rows = []
    for sig, counts in surviving.items():
        signature = vocab.signature_of(sig)
        idx_counts = {vocab.relation_index(r): c for r, c in counts.items() if c > 0}
        rows.append(SignatureRow(signature=signature, counts=idx_counts, total=sum(idx_counts.values())))
    rows.sort(key=lambda r: r.signature.classes)
    return SignatureDataset(
        vocabulary=vocab,
        rows=tuple(rows),
        min_support=min_support,
        skipped_records=skipped_records,
    )


@dataclass(frozen=True)
class FoldAssignment:
    """Signature -> fold index in [0, k); every dataset signature appears once."""

    k: int
    seed: int
    fold_of: Mapping[ClassSignature, int]

    def fold_rows(self, ds: SignatureDataset, fold: int) -> list:
        return [row for row in ds.rows if self.fold_of[row.signature] == fold]

    def training_rows(self, ds: SignatureDataset, fold: int) -> list:
        return [row for row in ds.rows if self.fold_of[row.signature] != fold]


def assign_folds(ds: SignatureDataset, k: int = 10, seed: int = 0) -> FoldAssignment:
    """Assign each signature to a fold by seeded stable hash of its class ids.

    Deterministic given the seed and invariant under dataset row reordering.
    Requires ``k >= 2`` and at least ``k`` rows. Hash-based assignment does
    not guarantee every fold is non-empty on very small datasets.
    """
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    if len(ds) < k:
        raise ConfigError(f"dataset has {len(ds)} rows, fewer than {k} folds")
    fold_of = {
        row.signature: stable_hash(row.signature.canonical_key(ds.vocabulary), seed) % k
        for row in ds.rows
    }
    return FoldAssignment(k=k, seed=seed, fold_of=fold_of)


def class_marginals(records: Iterable[UsageRecord], kb: KbSnapshot) -> dict:
    """Per-class raw relation counts, summed over all member entities.

    An entity contributes its counts to every class it belongs to. Returned
    as ``{class_id: {relation_id: count}}``; empty input gives ``{}``.
    """
    marginals: dict = defaultdict(Counter)
    for rec in records:
        facts = kb.get(rec.entity)
        if facts is None:
            continue
        for c in facts.classes:
            marginals[c][rec.relation] += rec.count
    return {c: dict(counts) for c, counts in marginals.items()}


@dataclass(frozen=True)
class ReindexStats:
    """What got dropped or merged when re-indexing a dataset onto a vocabulary."""

    dropped_classes: int = 0
    dropped_relations: int = 0
    dropped_rows: int = 0
    merged_rows: int = 0


def reindex_onto(ds: SignatureDataset, vocab: Vocabulary) -> tuple:
    """Re-express a dataset over another vocabulary, dropping unknown ids.

    Rows whose signature or counts empty out are dropped; rows whose reduced
    signatures collide are merged by summing counts. Returns
    ``(SignatureDataset, ReindexStats)``. Raises :class:`ConfigError` when no
    relation survives the intersection of vocabularies.
    """
    dropped_classes = dropped_relations = dropped_rows = 0
    merged: dict = {}
    for row in ds.rows:
        class_ids = ds.vocabulary.signature_ids(row.signature)
        kept_classes = [c for c in class_ids if vocab.has_class(c)]
        dropped_classes += len(class_ids) - len(kept_classes)
        new_counts: dict = {}
        for i, c in row.counts.items():
            rel_id = ds.vocabulary.relations[i]
            if vocab.has_relation(rel_id):
                j = vocab.relation_index(rel_id)
                new_counts[j] = new_counts.get(j, 0) + c
            else:
                dropped_relations += 1
        if not kept_classes or not new_counts:
            dropped_rows += 1
            continue
        signature = vocab.signature_of(kept_classes)
        if signature in merged:
            for j, c in new_counts.items():
                merged[signature][j] = merged[signature].get(j, 0) + c
        else:
            merged[signature] = new_counts
    if not merged:
        raise ConfigError("no rows survive re-indexing: vocabularies do not overlap")
    merged_rows = len(ds.rows) - dropped_rows - len(merged)
    rows = [
        SignatureRow(signature=sig, counts=counts, total=sum(counts.values()))
        for sig, counts in merged.items()
    ]
    rows.sort(key=lambda r: r.signature.classes)
    reindexed = SignatureDataset(vocabulary=vocab, rows=tuple(rows), min_support=1)
    stats = ReindexStats(
        dropped_classes=dropped_classes,
        dropped_relations=dropped_relations,
        dropped_rows=dropped_rows,
        merged_rows=merged_rows,
    )
    return reindexed, stats
