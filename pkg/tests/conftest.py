import json

import pytest

from kbdemand.core import RelationDistribution, Vocabulary
from kbdemand.ingestion import EntityFacts, KbSnapshot, UsageRecord


@pytest.fixture
def tiny_vocab():
    return Vocabulary.from_ids(["person", "politician", "writer"], ["hasAge", "hasName", "hasSpouse"])


def make_dist(vocab, **proportions):
    """Build a RelationDistribution from relation-id keyword proportions."""
    return RelationDistribution({vocab.relation_index(k): v for k, v in proportions.items()})


def make_kb(spec):
    """spec: {entity: (classes, relations)} with iterables of id strings."""
    return KbSnapshot(
        entities={
            e: EntityFacts(classes=frozenset(classes), relations=frozenset(relations))
            for e, (classes, relations) in spec.items()
        }
    )


def make_records(triples):
    """triples: iterable of (entity, relation, count)."""
    return [UsageRecord(entity=e, relation=r, count=c) for e, r, c in triples]


def write_ndjson(path, objects):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objects:
            fh.write(json.dumps(obj) + "\n")
    return path
