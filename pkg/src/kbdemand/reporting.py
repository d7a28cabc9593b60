"""TSV and JSON report writers with stable, diff-friendly formatting.

Every writer emits byte-identical output for identical inputs: floats are
fixed to six decimals in TSV and rely on repr round-tripping in JSON, and
all key orders are explicit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from .completeness import CompletenessReport
from .evaluation import CvResult, MetricReport, TemporalResult

EVAL_COLUMNS = (
    "model",
    "dataset",
    "jaccard",
    "false_neg",
    "false_pos",
    "intersection",
    "w_jaccard",
    "w_false_neg",
    "w_false_pos",
    "w_intersection",
    "n_rows",
    "degenerate",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _write_tsv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _write_json(path, payload) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _metric_pair_row(model: str, dataset: str, unweighted: MetricReport, weighted: MetricReport) -> list:
    return [
        model,
        dataset,
        unweighted.jaccard,
        unweighted.false_neg,
        unweighted.false_pos,
        unweighted.intersection,
        weighted.jaccard,
        weighted.false_neg,
        weighted.false_pos,
        weighted.intersection,
        unweighted.n_rows,
        unweighted.degenerate_count,
    ]


def write_eval_reports(out_dir, dataset_name: str, results: Mapping[str, CvResult]) -> list:
    """Write report.tsv / report.json / folds.tsv for cross-validation results."""
    out_dir = Path(out_dir)
    rows = [
        _metric_pair_row(kind, dataset_name, res.unweighted, res.weighted)
        for kind, res in results.items()
    ]
    report_tsv = out_dir / "report.tsv"
    _write_tsv(report_tsv, EVAL_COLUMNS, rows)

    fold_rows = []
    for kind, res in results.items():
        for fold, (uw, w) in enumerate(zip(res.per_fold_unweighted, res.per_fold_weighted)):
            fold_rows.append(
                [kind, fold, uw.jaccard, uw.false_neg, uw.false_pos, uw.intersection,
                 w.jaccard, w.false_neg, w.false_pos, w.intersection, uw.n_rows, uw.degenerate_count]
            )
    folds_tsv = out_dir / "folds.tsv"
    _write_tsv(
        folds_tsv,
        ("model", "fold", "jaccard", "false_neg", "false_pos", "intersection",
         "w_jaccard", "w_false_neg", "w_false_pos", "w_intersection", "n_rows", "degenerate"),
        fold_rows,
    )

    payload = {
        "dataset": dataset_name,
        "models": {
            kind: {
                "k": res.k,
                "seed": res.seed,
                "unweighted": res.unweighted.as_dict(),
                "weighted": res.weighted.as_dict(),
                "per_fold_unweighted": [r.as_dict() for r in res.per_fold_unweighted],
                "per_fold_weighted": [r.as_dict() for r in res.per_fold_weighted],
            }
            for kind, res in results.items()
        },
    }
    report_json = out_dir / "report.json"
    _write_json(report_json, payload)
    return [report_tsv, folds_tsv, report_json]


def write_temporal_reports(out_dir, dataset_name: str, model_kind: str, results: Sequence[TemporalResult]) -> list:
    """Write report.tsv / report.json for a temporal evaluation run."""
    out_dir = Path(out_dir)
    rows = []
    for res in results:
        row = _metric_pair_row(model_kind, f"{dataset_name}:{res.label}", res.unweighted, res.weighted)
        rows.append(row + [res.dropped_classes, res.dropped_relations, res.dropped_rows])
    report_tsv = out_dir / "report.tsv"
    _write_tsv(
        report_tsv,
        EVAL_COLUMNS + ("dropped_classes", "dropped_relations", "dropped_rows"),
        rows,
    )
    payload = {
        "dataset": dataset_name,
        "model": model_kind,
        "periods": [
            {
                "label": res.label,
                "unweighted": res.unweighted.as_dict(),
                "weighted": res.weighted.as_dict(),
                "dropped_classes": res.dropped_classes,
                "dropped_relations": res.dropped_relations,
                "dropped_rows": res.dropped_rows,
            }
            for res in results
        ],
    }
    report_json = out_dir / "report.json"
    _write_json(report_json, payload)
    return [report_tsv, report_json]


def write_completeness_reports(out_dir, report: CompletenessReport) -> list:
    """Write entities.tsv / gaps.tsv / report.json for a completeness run."""
    out_dir = Path(out_dir)
    entity_rows = [
        [
            item.entity,
            item.score,
            item.truncated_mass,
            item.missing_mass,
            len(item.missing),
            item.flag or "-",
        ]
        for item in report.per_entity
    ]
    entities_tsv = out_dir / "entities.tsv"
    _write_tsv(
        entities_tsv,
        ("entity", "score", "truncated_mass", "missing_mass", "n_missing", "flag"),
        entity_rows,
    )
    gap_rows = [
        [gap.relation, gap.missing_mass, gap.completeness_delta,
         report.subset_score + gap.completeness_delta, gap.n_entities]
        for gap in report.gaps
    ]
    gaps_tsv = out_dir / "gaps.tsv"
    _write_tsv(
        gaps_tsv,
        ("relation", "missing_mass", "completeness_delta", "projected_score", "n_entities"),
        gap_rows,
    )
    payload = {
        "subset_score": report.subset_score,
        "threshold": report.threshold,
        "total_weight": report.total_weight,
        "n_entities": len(report.per_entity),
        "gaps": [
            {
                "relation": gap.relation,
                "missing_mass": gap.missing_mass,
                "completeness_delta": gap.completeness_delta,
                "n_entities": gap.n_entities,
            }
            for gap in report.gaps
        ],
        "entities": [
            {
                "entity": item.entity,
                "score": item.score,
                "truncated_mass": item.truncated_mass,
                "missing": [[rel, prop] for rel, prop in item.missing],
                "flag": item.flag,
            }
            for item in report.per_entity
        ],
    }
    report_json = out_dir / "report.json"
    _write_json(report_json, payload)
    return [entities_tsv, gaps_tsv, report_json]
