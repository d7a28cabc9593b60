"""Seeded synthetic KB + usage-log generator with known ground truth.

Every class carries a latent relation-affinity vector; each unordered class
pair adds an interaction vector scaled by the interaction strength, so the
true relation distribution of an entity is a softmax over the summed logits
of its class set. Query clauses are multinomial samples from that truth.
Later periods shift each class's affinities along a fixed random drift
direction with magnitude ``drift_rate * period``, and KB facts are sampled
with planted gaps so completeness scoring has a recorded ground truth.

All randomness derives from ``numpy.random.SeedSequence`` spawn keys, so
equal configs produce byte-identical outputs regardless of platform dict
ordering or call interleaving.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .ingestion import KbSnapshot, EntityFacts, UsageRecord, write_kb_snapshot, write_usage_log

# spawn-key domains, kept distinct per random stream
_DOMAIN_ENTITIES = 0
_DOMAIN_CLASS_AFFINITY = 1
_DOMAIN_PAIR_INTERACTION = 2
_DOMAIN_DRIFT = 3
_DOMAIN_CLAUSES = 4
_DOMAIN_FACTS = 5


@dataclass(frozen=True)
class GenConfig:
    """Knobs for the generator; defaults give a small, fast dataset."""

    seed: int = 0
    n_classes: int = 50
    n_relations: int = 30
    n_entities: int = 200
    classes_per_entity: tuple = (2, 4)
    clauses_per_entity: tuple = (20, 100)
    interaction_strength: float = 0.0  # lambda in [0, 1]
    drift_rate: float = 0.0  # per-period logit noise scale, >= 0
    n_periods: int = 1
    affinity_scale: float = 1.5
    gap_rate: float = 0.3  # probability a demanded relation is withheld from the KB
    gap_threshold: float = 0.95
    usage_zipf_alpha: Optional[float] = None  # heavy-tailed clause totals when set
    class_zipf: float = 0.0  # class popularity skew; 0 = uniform membership sampling
    affinity_zipf: float = 0.0  # informativeness skew: tail classes barely move demand

    def __post_init__(self):
        if min(self.n_classes, self.n_relations, self.n_entities, self.n_periods) < 1:
            raise ValueError("counts must all be >= 1")
        lo, hi = self.classes_per_entity
        if not (1 <= lo <= hi <= self.n_classes):
            raise ValueError(f"invalid classes_per_entity range {self.classes_per_entity}")
        clo, chi = self.clauses_per_entity
        if not (1 <= clo <= chi):
            raise ValueError(f"invalid clauses_per_entity range {self.clauses_per_entity}")
        if not 0.0 <= self.interaction_strength <= 1.0:
            raise ValueError("interaction_strength must be in [0, 1]")
        if self.drift_rate < 0:
            raise ValueError("drift_rate must be >= 0")
        if not 0.0 <= self.gap_rate <= 1.0:
            raise ValueError("gap_rate must be in [0, 1]")
        if not 0.0 < self.gap_threshold <= 1.0:
            raise ValueError("gap_threshold must be in (0, 1]")
        if self.usage_zipf_alpha is not None and self.usage_zipf_alpha <= 0:
            raise ValueError("usage_zipf_alpha must be positive")
        if self.class_zipf < 0:
            raise ValueError("class_zipf must be >= 0")
        if self.affinity_zipf < 0:
            raise ValueError("affinity_zipf must be >= 0")


@dataclass(frozen=True)
class TruthTable:
    """Ground-truth relation distribution per class signature (base period)."""

    relations: tuple
    by_signature: dict  # frozenset[class_id] -> np.ndarray over relations

    def distribution(self, signature) -> dict:
        probs = self.by_signature[frozenset(signature)]
        return {self.relations[i]: float(p) for i, p in enumerate(probs) if p > 0}

    def write(self, path, floor: float = 1e-6) -> None:
        """NDJSON: one line per signature; proportions below ``floor`` omitted."""
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for sig in sorted(self.by_signature, key=sorted):
                probs = self.by_signature[sig]
                dist = {
                    self.relations[i]: float(p)
                    for i, p in enumerate(probs)
                    if p >= floor
                }
                obj = {"classes": sorted(sig), "distribution": dist}
                fh.write(json.dumps(obj, sort_keys=True) + "\n")


@dataclass(frozen=True)
class GeneratedData:
    """Everything one generator run produces."""

    config: GenConfig
    kb: KbSnapshot
    periods: tuple  # tuple of tuples of UsageRecord, index = period
    truth: TruthTable
    demanded: dict  # entity -> tuple of demanded relation ids (truncated truth support)
    withheld: dict  # entity -> tuple of withheld (gap) relation ids
    clause_totals: tuple  # total clauses per period

    def write(self, out_dir, truth_floor: float = 1e-6) -> list:
        """Write kb.ndjson, usage_T*.ndjson, truth.ndjson and gaps.ndjson; returns paths."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        kb_path = out_dir / "kb.ndjson"
        write_kb_snapshot(self.kb, kb_path)
        paths.append(kb_path)
        for p, records in enumerate(self.periods):
            usage_path = out_dir / f"usage_T{p}.ndjson"
            write_usage_log(records, usage_path)
            paths.append(usage_path)
        truth_path = out_dir / "truth.ndjson"
        self.truth.write(truth_path, floor=truth_floor)
        paths.append(truth_path)
        gaps_path = out_dir / "gaps.ndjson"
        with gaps_path.open("w", encoding="utf-8") as fh:
            for entity in sorted(self.withheld):
                obj = {
                    "entity": entity,
                    "demanded": list(self.demanded[entity]),
                    "withheld": list(self.withheld[entity]),
                }
                fh.write(json.dumps(obj, sort_keys=True) + "\n")
        paths.append(gaps_path)
        return paths


def _rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _id_width(count: int) -> int:
    return max(4, len(str(count - 1)))


def generate(cfg: GenConfig) -> GeneratedData:
    """Run the generator; equal configs give identical results."""
    n, m = cfg.n_classes, cfg.n_relations
    cw, rw, ew = _id_width(n), _id_width(m), _id_width(cfg.n_entities)
    class_ids = [f"c{i:0{cw}d}" for i in range(n)]
    relation_ids = tuple(f"r{i:0{rw}d}" for i in range(m))
    entity_ids = [f"e{i:0{ew}d}" for i in range(cfg.n_entities)]

    # per-class informativeness: with affinity_zipf > 0 only head classes
    # move demand appreciably, tail classes are near-passengers
    info = np.ones(n)
    if cfg.affinity_zipf > 0:
        info = 1.0 / np.arange(1, n + 1) ** cfg.affinity_zipf

    affinity = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        affinity[i] = _rng(cfg.seed, _DOMAIN_CLASS_AFFINITY, i).normal(0.0, cfg.affinity_scale * info[i], m)
    drift_dir = None
    if cfg.drift_rate > 0 and cfg.n_periods > 1:
        drift_dir = np.empty((n, m), dtype=np.float64)
        for i in range(n):
            drift_dir[i] = _rng(cfg.seed, _DOMAIN_DRIFT, i).normal(0.0, info[i], m)

    pair_cache: dict = {}

    def pair_vector(i: int, j: int) -> np.ndarray:
        key = (i, j)
        vec = pair_cache.get(key)
        if vec is None:
            scale = cfg.affinity_scale * float(np.sqrt(info[i] * info[j]))
            vec = _rng(cfg.seed, _DOMAIN_PAIR_INTERACTION, i, j).normal(0.0, scale, m)
            pair_cache[key] = vec
        return vec

    master = _rng(cfg.seed, _DOMAIN_ENTITIES)
    lo, hi = cfg.classes_per_entity
    class_weights = None
    if cfg.class_zipf > 0:
        class_weights = 1.0 / np.arange(1, n + 1) ** cfg.class_zipf
        class_weights /= class_weights.sum()
    entity_classes = []
    base_logits_cache: dict = {}
    for _ in entity_ids:
        k = int(master.integers(lo, hi + 1))
        members = tuple(sorted(int(c) for c in master.choice(n, size=k, replace=False, p=class_weights)))
        entity_classes.append(members)

    def base_logits(members: tuple) -> np.ndarray:
        logits = base_logits_cache.get(members)
        if logits is None:
            logits = affinity[list(members)].sum(axis=0)
            if cfg.interaction_strength > 0:
                for a in range(len(members)):
                    for b in range(a + 1, len(members)):
                        logits = logits + cfg.interaction_strength * pair_vector(members[a], members[b])
            base_logits_cache[members] = logits
        return logits

    # ground truth per signature (base period)
    truth_by_sig = {}
    for members in entity_classes:
        sig = frozenset(class_ids[c] for c in members)
        if sig not in truth_by_sig:
            truth_by_sig[sig] = _softmax(base_logits(members))
    truth = TruthTable(relations=relation_ids, by_signature=truth_by_sig)

    # usage logs, one list per period
    clo, chi = cfg.clauses_per_entity
    periods = []
    clause_totals = []
    for p in range(cfg.n_periods):
        records = []
        total = 0
        for e_idx, entity in enumerate(entity_ids):
            members = entity_classes[e_idx]
            logits = base_logits(members)
            if drift_dir is not None and p >= 1:
                logits = logits + (cfg.drift_rate * p) * drift_dir[list(members)].sum(axis=0)
            probs = _softmax(logits)
            rng = _rng(cfg.seed, _DOMAIN_CLAUSES, p, e_idx)
            if cfg.usage_zipf_alpha is not None:
                draw = clo * (1.0 + rng.pareto(cfg.usage_zipf_alpha))
                n_clauses = int(min(max(draw, clo), chi))
            else:
                n_clauses = int(rng.integers(clo, chi + 1))
            counts = rng.multinomial(n_clauses, probs)
            total += n_clauses
            label = f"T{p}"
            for r_idx in np.nonzero(counts)[0]:
                records.append(
                    UsageRecord(
                        entity=entity,
                        relation=relation_ids[r_idx],
                        count=int(counts[r_idx]),
                        period=label,
                    )
                )
        periods.append(tuple(records))
        clause_totals.append(total)

    # KB facts: withhold each demanded relation with probability gap_rate
    entities = {}
    demanded_map = {}
    withheld_map = {}
    for e_idx, entity in enumerate(entity_ids):
        members = entity_classes[e_idx]
        probs = truth_by_sig[frozenset(class_ids[c] for c in members)]
        order = sorted(range(m), key=lambda r: (-probs[r], relation_ids[r]))
        demanded = []
        cum = 0.0
        for r in order:
            demanded.append(r)
            cum += probs[r]
            if cum >= cfg.gap_threshold - 1e-12:
                break
        rng = _rng(cfg.seed, _DOMAIN_FACTS, e_idx)
        keep = rng.random(len(demanded)) >= cfg.gap_rate
        present = [relation_ids[r] for r, kept in zip(demanded, keep) if kept]
        withheld = [relation_ids[r] for r, kept in zip(demanded, keep) if not kept]
        demanded_map[entity] = tuple(sorted(relation_ids[r] for r in demanded))
        withheld_map[entity] = tuple(sorted(withheld))
        entities[entity] = EntityFacts(
            classes=frozenset(class_ids[c] for c in members),
            relations=frozenset(present),
        )

    return GeneratedData(
        config=cfg,
        kb=KbSnapshot(entities=entities),
        periods=tuple(periods),
        truth=truth,
        demanded=demanded_map,
        withheld=withheld_map,
        clause_totals=tuple(clause_totals),
    )


# ---------------------------------------------------------------------------
# bundled configurations used by the acceptance suite and CLI presets
# ---------------------------------------------------------------------------

def benchmark_config() -> GenConfig:
    """Interaction-heavy benchmark: ~2000 signatures, 300 classes, 150 relations.

    Popularity and informativeness are Zipf-skewed so that class co-occurrence
    among head classes is a learnable signal while rare passenger classes
    punish models that spend parameters on them.
    """
    return GenConfig(
        seed=7,
        n_classes=300,
        n_relations=150,
        n_entities=2000,
        classes_per_entity=(3, 6),
        clauses_per_entity=(20, 100),
        interaction_strength=0.5,
        drift_rate=0.0,
        n_periods=1,
        class_zipf=1.0,
        affinity_zipf=0.6,
    )


def zipf_benchmark_config() -> GenConfig:
    """Benchmark variant whose signature usage totals are Zipf-distributed."""
    return GenConfig(
        seed=11,
        n_classes=300,
        n_relations=150,
        n_entities=2000,
        classes_per_entity=(3, 6),
        clauses_per_entity=(5, 5000),
        interaction_strength=0.5,
        drift_rate=0.0,
        n_periods=1,
        class_zipf=1.0,
        affinity_zipf=0.6,
        usage_zipf_alpha=1.1,
    )


def drift_config(seed: int = 13, drift_rate: float = 0.3) -> GenConfig:
    """Temporal benchmark: a base period plus three progressively drifted ones."""
    return GenConfig(
        seed=seed,
        n_classes=200,
        n_relations=100,
        n_entities=1500,
        classes_per_entity=(3, 6),
        clauses_per_entity=(100, 400),
        interaction_strength=0.3,
        drift_rate=drift_rate,
        n_periods=4,
        class_zipf=1.0,
        affinity_zipf=0.6,
    )


def table1_scale_config() -> GenConfig:
    """Large-scale smoke configuration (9400 classes / 2100 relations / ~37k signatures)."""
    return GenConfig(
        seed=1,
        n_classes=9400,
        n_relations=2100,
        n_entities=37000,
        classes_per_entity=(2, 5),
        clauses_per_entity=(5, 20),
        interaction_strength=0.0,
        drift_rate=0.0,
        n_periods=1,
    )


PRESETS = {
    "benchmark": benchmark_config,
    "zipf": zipf_benchmark_config,
    "drift": drift_config,
    "table1": table1_scale_config,
}
