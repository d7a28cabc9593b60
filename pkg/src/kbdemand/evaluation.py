"""Metrics and experiment harnesses.

The weighted Jaccard index scores support overlap between a predicted and an
observed relation distribution, weighting every relation by its mean
proportion across the two; its false-negative and false-positive variants
replace the intersection in the numerator with observed-minus-predicted and
predicted-minus-observed, so the three always partition the union mass. The
intersection metric is the stricter ``sum_i min(P_i, O_i)``.

Harnesses: grouped k-fold cross-validation (no signature crosses the
train/test boundary) and temporal evaluation of one model against a sequence
of later-period datasets.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .aggregation import SignatureDataset, assign_folds, reindex_onto
from .core import RelationDistribution, truncate_to_mass
from .errors import ConfigError, KbDemandError, MetricError
from .models import TrainConfig, fit, derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalConfig:
    """How predictions and observations are prepared before scoring.

    By default both sides are truncated to the demand threshold before the
    Jaccard support computation (a dense softmax prediction would otherwise
    put every relation in the support), while the intersection is computed on
    the untruncated distributions.
    """

    truncate_predicted: bool = True
    truncate_observed: bool = True
    threshold: float = 0.95
    weight_by_usage: bool = False
    truncate_intersection: bool = False

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")


def weighted_jaccard(p: RelationDistribution, o: RelationDistribution) -> tuple:
    """(jaccard, false_neg, false_pos) under mean-proportion weighting.

    ``W(r) = (P(r) + O(r)) / 2`` with absent relations contributing zero.
    jaccard sums W over the support intersection, false_neg over observed
    minus predicted, false_pos over predicted minus observed, each divided by
    the union sum, so the three add to one.
    """
    support_p = p.support
    support_o = o.support
    union = support_p | support_o
    if not union:
        raise MetricError("weighted Jaccard undefined: both supports empty")
    inter_w = fn_w = fp_w = 0.0
    union_w = 0.0
    for r in union:
        w = (p.get(r) + o.get(r)) / 2.0
        union_w += w
        if r in support_p and r in support_o:
            inter_w += w
        elif r in support_o:
            fn_w += w
        else:
            fp_w += w
    if union_w <= 0.0:
        raise MetricError("weighted Jaccard undefined: zero union mass")
    return inter_w / union_w, fn_w / union_w, fp_w / union_w


def intersection_metric(p: RelationDistribution, o: RelationDistribution) -> float:
    """Sum of element-wise minima of the two distributions (absent = 0)."""
    shared = p.support & o.support
    return sum(min(p.get(r), o.get(r)) for r in shared)


@dataclass(frozen=True)
class RowMetrics:
    """Per-row metric tuple plus its usage weight."""

    jaccard: float
    false_neg: float
    false_pos: float
    intersection: float
    weight: float
    degenerate: bool


@dataclass(frozen=True)
class MetricReport:
    """Aggregated metrics over a set of rows (or mean over folds)."""

    jaccard: float
    false_neg: float
    false_pos: float
    intersection: float
    n_rows: int
    degenerate_count: int = 0

    def as_dict(self) -> dict:
        return {
            "jaccard": self.jaccard,
            "false_neg": self.false_neg,
            "false_pos": self.false_pos,
            "intersection": self.intersection,
            "n_rows": self.n_rows,
            "degenerate_count": self.degenerate_count,
        }


def score_row(
    prediction: RelationDistribution,
    observed: RelationDistribution,
    eval_cfg: EvalConfig,
    weight: float = 1.0,
) -> RowMetrics:
    """Apply the configured truncations and compute all metrics for one row."""
    p_j = truncate_to_mass(prediction, eval_cfg.threshold) if eval_cfg.truncate_predicted else prediction
    o_j = truncate_to_mass(observed, eval_cfg.threshold) if eval_cfg.truncate_observed else observed
    j, fn, fp = weighted_jaccard(p_j, o_j)
    if eval_cfg.truncate_intersection:
        inter = intersection_metric(p_j, o_j)
    else:
        inter = intersection_metric(prediction, observed)
    return RowMetrics(
        jaccard=j,
        false_neg=fn,
        false_pos=fp,
        intersection=inter,
        weight=weight,
        degenerate=prediction.flag is not None,
    )


def aggregate_rows(rows: Sequence[RowMetrics], weighted: bool) -> MetricReport:
    """Macro (or usage-weighted) average of row metrics."""
    if not rows:
        raise MetricError("cannot aggregate an empty set of row metrics")
    if weighted:
        total_w = sum(r.weight for r in rows)
        if total_w <= 0:
            raise MetricError("cannot weight rows: total weight is zero")
        weights = [r.weight / total_w for r in rows]
    else:
        weights = [1.0 / len(rows)] * len(rows)
    return MetricReport(
        jaccard=sum(w * r.jaccard for w, r in zip(weights, rows)),
        false_neg=sum(w * r.false_neg for w, r in zip(weights, rows)),
        false_pos=sum(w * r.false_pos for w, r in zip(weights, rows)),
        intersection=sum(w * r.intersection for w, r in zip(weights, rows)),
        n_rows=len(rows),
        degenerate_count=sum(1 for r in rows if r.degenerate),
    )


def _mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    k = len(reports)
    return MetricReport(
        jaccard=sum(r.jaccard for r in reports) / k,
        false_neg=sum(r.false_neg for r in reports) / k,
        false_pos=sum(r.false_pos for r in reports) / k,
        intersection=sum(r.intersection for r in reports) / k,
        n_rows=sum(r.n_rows for r in reports),
        degenerate_count=sum(r.degenerate_count for r in reports),
    )


def evaluate_model(
    model,
    rows,
    eval_cfg: EvalConfig,
) -> list:
    """Score a trained model against dataset rows, returning RowMetrics."""
    out = []
    for row in rows:
        prediction = model.predict(row.signature)
        out.append(score_row(prediction, row.observed, eval_cfg, weight=row.total))
    return out


@dataclass(frozen=True)
class CvResult:
    """Cross-validation outcome with both aggregation schemes retained."""

    model_kind: str
    k: int
    seed: int
    unweighted: MetricReport
    weighted: MetricReport
    per_fold_unweighted: tuple
    per_fold_weighted: tuple
    weight_by_usage: bool = False

    @property
    def summary(self) -> MetricReport:
        return self.weighted if self.weight_by_usage else self.unweighted

    @property
    def per_fold(self) -> tuple:
        return self.per_fold_weighted if self.weight_by_usage else self.per_fold_unweighted


def _run_fold(ds, model_kind, cfg, eval_cfg, assignment, fold):
    test_rows = assignment.fold_rows(ds, fold)
    if not test_rows:
        return fold, None
    train_rows = assignment.training_rows(ds, fold)
    train_ds = SignatureDataset(
        vocabulary=ds.vocabulary, rows=tuple(train_rows), min_support=ds.min_support
    )
    fold_cfg = replace(cfg, seed=derive_seed(cfg.seed, "fold", fold))
    try:
        model = fit(model_kind, train_ds, fold_cfg)
    except KbDemandError as exc:
        raise type(exc)(f"fold {fold}: {exc}") from exc
    return fold, evaluate_model(model, test_rows, eval_cfg)


def cross_validate(
    ds: SignatureDataset,
    model_kind: str,
    cfg: Optional[TrainConfig] = None,
    eval_cfg: Optional[EvalConfig] = None,
    k: int = 10,
    seed: int = 0,
    jobs: int = 1,
) -> CvResult:
    """Grouped k-fold cross-validation of one model kind.

    Signatures are hashed into folds (train/test signature sets are disjoint
    by construction); per fold the model trains on the other folds' rows and
    is scored on the held-out signatures. Hash assignment can leave a fold
    empty on small datasets; empty folds are skipped. Deterministic given
    ``seed`` regardless of ``jobs``.
    """
    cfg = cfg or TrainConfig()
    eval_cfg = eval_cfg or EvalConfig()
    assignment = assign_folds(ds, k=k, seed=seed)
    fold_ids = list(range(k))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(
                pool.map(lambda f: _run_fold(ds, model_kind, cfg, eval_cfg, assignment, f), fold_ids)
            )
    else:
        outcomes = [_run_fold(ds, model_kind, cfg, eval_cfg, assignment, f) for f in fold_ids]
    outcomes.sort(key=lambda pair: pair[0])
    per_fold_unweighted = []
    per_fold_weighted = []
    skipped = 0
    for fold, rows in outcomes:
        if rows is None:
            skipped += 1
            continue
        per_fold_unweighted.append(aggregate_rows(rows, weighted=False))
        per_fold_weighted.append(aggregate_rows(rows, weighted=True))
    if skipped:
        log.warning("cross_validate: %d empty fold(s) skipped", skipped)
    if not per_fold_unweighted:
        raise ConfigError("all folds were empty")
    return CvResult(
        model_kind=model_kind,
        k=k,
        seed=seed,
        unweighted=_mean_report(per_fold_unweighted),
        weighted=_mean_report(per_fold_weighted),
        per_fold_unweighted=tuple(per_fold_unweighted),
        per_fold_weighted=tuple(per_fold_weighted),
        weight_by_usage=eval_cfg.weight_by_usage,
    )


@dataclass(frozen=True)
class TemporalResult:
    """Evaluation of the trained model against one future-period dataset."""

    label: str
    unweighted: MetricReport
    weighted: MetricReport
    dropped_classes: int = 0
    dropped_relations: int = 0
    dropped_rows: int = 0


def temporal_eval(
    train_ds: SignatureDataset,
    futures: Sequence,
    model_kind: str = "nn",
    cfg: Optional[TrainConfig] = None,
    eval_cfg: Optional[EvalConfig] = None,
) -> list:
    """Train once on all of ``train_ds``, evaluate against each future dataset.

    ``futures`` is a sequence of ``(label, SignatureDataset)`` pairs (or bare
    datasets, labelled T1..Tk in order). Future datasets are re-indexed onto
    the training vocabulary; unseen classes/relations are dropped and the drop
    counts reported per period.
    """
    cfg = cfg or TrainConfig()
    eval_cfg = eval_cfg or EvalConfig()
    labelled = []
    for i, item in enumerate(futures, start=1):
        if isinstance(item, tuple):
            labelled.append(item)
        else:
            labelled.append((f"T{i}", item))
    model = fit(model_kind, train_ds, cfg)
    results = []
    for label, future_ds in labelled:
        reindexed, stats = reindex_onto(future_ds, train_ds.vocabulary)
        rows = evaluate_model(model, reindexed.rows, eval_cfg)
        results.append(
            TemporalResult(
                label=label,
                unweighted=aggregate_rows(rows, weighted=False),
                weighted=aggregate_rows(rows, weighted=True),
                dropped_classes=stats.dropped_classes,
                dropped_relations=stats.dropped_relations,
                dropped_rows=stats.dropped_rows,
            )
        )
    return results
