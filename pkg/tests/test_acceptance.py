"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete. Everything here is seeded and deterministic.
"""

import json
import resource
import time

import numpy as np
import pytest

from kbdemand.aggregation import SignatureDataset, aggregate
from kbdemand.cli import main as cli_main
from kbdemand.completeness import completeness_report, entity_completeness, subset_completeness
from kbdemand.core import RelationDistribution, normalize, truncate_to_mass
from kbdemand.evaluation import (
    EvalConfig,
    cross_validate,
    intersection_metric,
    temporal_eval,
    weighted_jaccard,
)
from kbdemand.ingestion import EntityFacts, KbSnapshot
from kbdemand.models import (
    NeuralParams,
    TrainConfig,
    fit_frequency,
    fit_neural,
    fit_regression,
    kl_loss_and_gradients,
    load_model,
    save_model,
    training_residual,
)
from kbdemand.synthgen import (
    GenConfig,
    benchmark_config,
    drift_config,
    generate,
    table1_scale_config,
    zipf_benchmark_config,
)

from conftest import make_kb, make_records


def report(criterion, detail):
    print(f"\nACCEPTANCE {criterion} PASS: {detail}")


def random_distribution_pair(rng, universe=40, max_support=20):
    def one():
        size = int(rng.integers(1, max_support + 1))
        support = rng.choice(universe, size=size, replace=False)
        counts = rng.integers(1, 1000, size=size)
        return normalize({int(r): int(c) for r, c in zip(support, counts)})
    return one(), one()


def brute_force_metrics(p, o, universe=40):
    """Literal evaluation of the weighted-overlap metrics over every relation."""
    inter_w = fn_w = fp_w = union_w = 0.0
    intersection = 0.0
    for r in range(universe):
        pv = p.entries.get(r, 0.0)
        ov = o.entries.get(r, 0.0)
        w = (pv + ov) / 2.0
        in_p = pv > 0.0
        in_o = ov > 0.0
        if in_p or in_o:
            union_w += w
        if in_p and in_o:
            inter_w += w
        if in_o and not in_p:
            fn_w += w
        if in_p and not in_o:
            fp_w += w
        intersection += min(pv, ov)
    return inter_w / union_w, fn_w / union_w, fp_w / union_w, intersection


def test_c01_metric_oracle_equivalence():
    rng = np.random.default_rng(42)
    t0 = time.time()
    worst = 0.0
    for _ in range(1000):
        p, o = random_distribution_pair(rng)
        j, fn, fp = weighted_jaccard(p, o)
        inter = intersection_metric(p, o)
        bj, bfn, bfp, binter = brute_force_metrics(p, o)
        worst = max(worst, abs(j - bj), abs(fn - bfn), abs(fp - bfp), abs(inter - binter))
    elapsed = time.time() - t0
    assert worst <= 1e-12, f"max abs diff {worst}"
    assert elapsed < 5.0, f"took {elapsed:.1f}s"
    report("C1", f"1000 random pairs agree with brute force, max abs diff {worst:.2e}, {elapsed:.2f}s")


def test_c02_metric_identities():
    rng = np.random.default_rng(43)
    for _ in range(1000):
        p, o = random_distribution_pair(rng)
        j, fn, fp = weighted_jaccard(p, o)
        assert abs(j + fn + fp - 1.0) <= 1e-9
    p, _ = random_distribution_pair(rng)
    assert weighted_jaccard(p, p) == (1.0, 0.0, 0.0)
    assert intersection_metric(p, p) == pytest.approx(1.0, abs=1e-9)
    a = RelationDistribution({0: 0.5, 1: 0.5})
    b = RelationDistribution({2: 0.25, 3: 0.75})
    j, fn, fp = weighted_jaccard(a, b)
    assert j == 0.0 and fn + fp == pytest.approx(1.0, abs=1e-9)
    assert intersection_metric(a, b) == 0.0
    report("C2", "partition, identity and disjoint-support identities hold on 1000 pairs")


def test_c03_gradient_check():
    rng_master = np.random.default_rng(7)
    checked = 0
    worst = 0.0
    attempts = 0
    while checked < 20:
        attempts += 1
        assert attempts < 200, "could not draw enough kink-free instances"
        rng = np.random.default_rng(rng_master.integers(2**32))
        n = int(rng.integers(2, 9))
        m = int(rng.integers(2, 7))
        h = int(rng.integers(1, 5))
        batch = int(rng.integers(1, 5))
        params = NeuralParams(
            w1=rng.normal(0, 1.0, (h, n)),
            b1=rng.normal(0, 1.0, h),
            w2=rng.normal(0, 1.0, (m, h)),
            b2=rng.normal(0, 1.0, m),
        )
        x = (rng.random((batch, n)) < 0.5).astype(float)
        y = rng.random((batch, m))
        y /= y.sum(axis=1, keepdims=True)
        if np.abs(x @ params.w1.T + params.b1).min() < 1e-3:
            continue  # finite differences break down at the ReLU kink
        _, analytic = kl_loss_and_gradients(params, x, y)
        step = 1e-5
        for key, arr in params.arrays().items():
            flat = arr.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up, _ = kl_loss_and_gradients(params, x, y)
                flat[i] = orig - step
                down, _ = kl_loss_and_gradients(params, x, y)
                flat[i] = orig
                numeric = (up - down) / (2 * step)
                a = analytic[key].ravel()[i]
                rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-8)
                worst = max(worst, rel)
        checked += 1
    assert worst < 1e-4, f"max relative error {worst}"
    report("C3", f"{checked} instances, max relative gradient error {worst:.2e}")


def overfit_dataset():
    # exactly five distinct signatures
    data = generate(GenConfig(
        seed=20, n_classes=30, n_relations=10, n_entities=5,
        classes_per_entity=(1, 2), clauses_per_entity=(50, 100),
    ))
    ds = aggregate(list(data.periods[0]), data.kb)
    assert len(ds) == 5
    return ds


def test_c04_overfit_sanity():
    ds = overfit_dataset()
    t0 = time.time()
    model = fit_neural(ds, TrainConfig(seed=0, epochs=2000))  # default learning rate
    elapsed = time.time() - t0
    worst = 0.0
    for row in ds.rows:
        pred = model.predict(row.signature)
        keys = set(pred.entries) | set(row.observed.entries)
        tv = 0.5 * sum(abs(pred.get(k) - row.observed.get(k)) for k in keys)
        worst = max(worst, tv)
    assert worst <= 0.05, f"worst total variation {worst}"
    assert elapsed < 30.0, f"took {elapsed:.1f}s"
    report("C4", f"5-signature overfit: worst TV {worst:.4f} in {elapsed:.1f}s")


def test_c05_exact_recovery():
    # frequency model versus ground truth, single-class signatures, no interactions
    cfg = GenConfig(
        seed=31, n_classes=20, n_relations=30, n_entities=60,
        classes_per_entity=(1, 1), clauses_per_entity=(10_000, 12_000),
        interaction_strength=0.0,
    )
    data = generate(cfg)
    ds = aggregate(list(data.periods[0]), data.kb)
    assert min(row.total for row in ds.rows) >= 10_000
    model = fit_frequency(ds)
    scores = []
    for row in ds.rows:
        sig_ids = frozenset(ds.vocabulary.signature_ids(row.signature))
        truth = {
            ds.vocabulary.relation_index(r): p
            for r, p in data.truth.distribution(sig_ids).items()
            if ds.vocabulary.has_relation(r)
        }
        truth_dist = normalize(truth)
        p = truncate_to_mass(model.predict(row.signature), 0.95, ds.vocabulary)
        o = truncate_to_mass(truth_dist, 0.95, ds.vocabulary)
        scores.append(weighted_jaccard(p, o)[0])
    mean_j = sum(scores) / len(scores)
    assert mean_j >= 0.95, f"mean Jaccard vs truth {mean_j}"

    # regression on an exactly linear system with l2 -> 0
    q = {
        "c1": {"x": 6, "y": 2, "z": 2},
        "c2": {"x": 2, "y": 6, "z": 2},
        "c3": {"x": 2, "y": 2, "z": 6},
        "c4": {"x": 4, "y": 4, "z": 2},
    }
    pairs = [("c1", "c2"), ("c1", "c3"), ("c2", "c3"), ("c1", "c4"), ("c2", "c4"), ("c3", "c4")]
    kb = {}
    records = []
    for i, (a, b) in enumerate(pairs):
        kb[f"ent{i}"] = ({a, b}, set())
        for rel in ("x", "y", "z"):
            records.append((f"ent{i}", rel, q[a][rel] + q[b][rel]))
    ds_lin = aggregate(make_records(records), make_kb(kb))
    model_lin = fit_regression(ds_lin, TrainConfig(l2=0.0))
    residual = training_residual(model_lin, ds_lin)
    assert residual <= 1e-8, f"training residual {residual}"
    report("C5", f"frequency-vs-truth mean Jaccard {mean_j:.4f}; exact-linear residual {residual:.2e}")


def test_c06_trend_reproduction():
    t0 = time.time()
    cfg = benchmark_config()
    assert cfg.interaction_strength == 0.5
    data = generate(cfg)
    ds = aggregate(list(data.periods[0]), data.kb)
    assert 1500 <= len(ds) <= 2500
    assert 250 <= ds.vocabulary.n_classes <= 350
    assert 100 <= ds.vocabulary.n_relations <= 200
    scores = {}
    for kind in ("freq", "regr", "nn"):
        scores[kind] = cross_validate(ds, kind, TrainConfig(), EvalConfig(), k=10, seed=0).unweighted.jaccard
    elapsed = time.time() - t0
    assert scores["nn"] >= scores["freq"] >= scores["regr"], scores
    assert scores["nn"] - scores["freq"] >= 0.03, scores
    assert elapsed < 600, f"took {elapsed:.0f}s"
    report("C6", "10-fold mean weighted Jaccard "
           f"nn={scores['nn']:.4f} >= freq={scores['freq']:.4f} >= regr={scores['regr']:.4f} "
           f"(nn-freq={scores['nn'] - scores['freq']:.4f}) in {elapsed:.0f}s")


def test_c07_usage_weighted_exceeds_unweighted():
    data = generate(zipf_benchmark_config())
    ds = aggregate(list(data.periods[0]), data.kb)
    res = cross_validate(ds, "nn", TrainConfig(), EvalConfig(), k=10, seed=0)
    assert res.weighted.jaccard > res.unweighted.jaccard
    report("C7", f"Zipf usage: weighted {res.weighted.jaccard:.4f} > unweighted {res.unweighted.jaccard:.4f}")


def test_c08_temporal_trend():
    for seed in (13, 14, 15):
        data = generate(drift_config(seed=seed, drift_rate=0.3))
        datasets = [aggregate(list(records), data.kb) for records in data.periods]
        results = temporal_eval(
            datasets[0], [(f"T{i}", d) for i, d in enumerate(datasets[1:], start=1)],
            model_kind="nn", cfg=TrainConfig(),
        )
        scores = [r.unweighted.jaccard for r in results]
        assert len(scores) == 3
        assert all(scores[i] >= scores[i + 1] for i in range(len(scores) - 1)), (seed, scores)
    data = generate(drift_config(seed=13, drift_rate=0.0))
    datasets = [aggregate(list(records), data.kb) for records in data.periods]
    results = temporal_eval(
        datasets[0], [(f"T{i}", d) for i, d in enumerate(datasets[1:], start=1)],
        model_kind="nn", cfg=TrainConfig(),
    )
    flat = [r.unweighted.jaccard for r in results]
    assert max(flat) - min(flat) <= 0.01, flat
    report("C8", f"drift 0.3 non-increasing across seeds 13-15; zero-drift spread {max(flat) - min(flat):.4f}")


def test_c09_completeness_self_consistency():
    data = generate(GenConfig(
        seed=17, n_classes=25, n_relations=20, n_entities=120,
        classes_per_entity=(1, 3), clauses_per_entity=(100, 300), gap_rate=0.4,
    ))
    ds = aggregate(list(data.periods[0]), data.kb)
    model = fit_frequency(ds)
    usage = {}
    for rec in data.periods[0]:
        usage[rec.entity] = usage.get(rec.entity, 0) + rec.count
    entities = sorted(data.kb.entities)
    threshold = 0.95
    full_report = completeness_report(
        model, data.kb, entities, usage, threshold=threshold, top_k=10**9
    )
    # apply every reported gap: each entity gains all its missing relations
    patched = {}
    missing_by_entity = {item.entity: item.missing for item in full_report.per_entity}
    for e in entities:
        facts = data.kb.entities[e]
        extra = {rel for rel, _ in missing_by_entity.get(e, ())}
        patched[e] = EntityFacts(classes=facts.classes, relations=facts.relations | extra)
    patched_kb = KbSnapshot(entities=patched)
    after = subset_completeness(model, patched_kb, entities, usage, threshold=threshold)
    expected_delta = sum(g.completeness_delta for g in full_report.gaps)
    assert after == pytest.approx(full_report.subset_score + expected_delta, abs=1e-9)
    # the patched score is the truncated-mass-weighted maximum
    total_w = sum(w for w in (usage.get(e, 0) for e in entities) if w > 0)
    max_score = sum(
        usage.get(item.entity, 0) * item.truncated_mass for item in full_report.per_entity
    ) / total_w
    assert after == pytest.approx(max_score, abs=1e-9)

    # adding one missing fact raises the entity score by exactly its proportion
    target = next(item for item in full_report.per_entity if item.missing)
    relation, proportion = target.missing[0]
    facts = data.kb.entities[target.entity]
    one_fix = dict(data.kb.entities)
    one_fix[target.entity] = EntityFacts(classes=facts.classes, relations=facts.relations | {relation})
    bumped = entity_completeness(model, KbSnapshot(entities=one_fix), target.entity, threshold)
    assert bumped.score - target.score == pytest.approx(proportion, abs=1e-9)
    report("C9", f"gap application reaches weighted maximum {max_score:.4f} exactly; "
           f"single-fact delta exact ({relation} +{proportion:.4f})")


def test_c10_determinism_and_round_trip(tmp_path):
    def run(*argv):
        assert cli_main([str(a) for a in argv]) == 0

    outputs = {}
    for tag in ("a", "b"):
        gen = tmp_path / f"gen_{tag}"
        agg = tmp_path / f"agg_{tag}"
        model = tmp_path / f"model_{tag}.json"
        evl = tmp_path / f"eval_{tag}"
        run("synth", "--seed", 3, "--n-classes", 20, "--n-relations", 12,
            "--n-entities", 70, "--clauses-per-entity", "20,60", "--out", gen)
        run("aggregate", "--usage", gen / "usage_T0.ndjson", "--kb", gen / "kb.ndjson", "--out", agg)
        run("train", "--dataset", agg / "dataset.ndjson", "--model", "nn",
            "--seed", 5, "--epochs", 25, "--out", model)
        run("eval", "--dataset", agg / "dataset.ndjson", "--model", "all", "--folds", 5,
            "--seed", 5, "--epochs", 10, "--out", evl)
        outputs[tag] = (gen, agg, model, evl)

    gen_a, agg_a, model_a, eval_a = outputs["a"]
    gen_b, agg_b, model_b, eval_b = outputs["b"]
    for name in ("kb.ndjson", "usage_T0.ndjson", "truth.ndjson", "gaps.ndjson"):
        assert (gen_a / name).read_bytes() == (gen_b / name).read_bytes()
    assert (agg_a / "dataset.ndjson").read_bytes() == (agg_b / "dataset.ndjson").read_bytes()
    assert model_a.read_bytes() == model_b.read_bytes()
    for name in ("report.tsv", "report.json", "folds.tsv"):
        assert (eval_a / name).read_bytes() == (eval_b / name).read_bytes()
    # manifests match apart from their creation timestamps
    doc_a = json.loads((eval_a / "manifest.json").read_text())
    doc_b = json.loads((eval_b / "manifest.json").read_text())
    doc_a.pop("created_utc"), doc_b.pop("created_utc")
    doc_a_inputs = {k.split("/")[-1]: v for k, v in doc_a.pop("inputs").items()}
    doc_b_inputs = {k.split("/")[-1]: v for k, v in doc_b.pop("inputs").items()}
    assert doc_a_inputs == doc_b_inputs  # same input digests
    assert doc_a == doc_b

    loaded = load_model(model_a)
    ds = SignatureDataset.load(agg_a / "dataset.ndjson")
    trained = fit_neural(ds, TrainConfig(seed=5, epochs=25))
    resaved = tmp_path / "resaved.json"
    save_model(loaded, resaved)
    assert resaved.read_bytes() == model_a.read_bytes()
    for row in ds.rows[:25]:
        assert loaded.predict(row.signature).entries == trained.predict(row.signature).entries
    report("C10", "synth/aggregate/train/eval reruns byte-identical; save-load-predict bit-identical")


def test_c11_scale_smoke():
    cfg = table1_scale_config()
    assert (cfg.n_classes, cfg.n_relations, cfg.n_entities) == (9400, 2100, 37000)
    data = generate(cfg)
    ds = aggregate(list(data.periods[0]), data.kb)
    assert len(ds) > 30_000
    res = cross_validate(ds, "freq", TrainConfig(), EvalConfig(), k=10, seed=0)
    t0 = time.time()
    model = fit_neural(ds, TrainConfig(epochs=1))
    epoch_time = time.time() - t0
    peak_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024 / 1024
    assert peak_gb < 16.0, f"peak RSS {peak_gb:.2f} GB"
    assert epoch_time < 600, f"one epoch took {epoch_time:.0f}s"
    assert np.isfinite(model.loss_history[-1])
    report("C11", f"{len(ds)} signatures: freq CV J={res.unweighted.jaccard:.4f}, "
           f"NN epoch {epoch_time:.0f}s, peak RSS {peak_gb:.2f} GB")
