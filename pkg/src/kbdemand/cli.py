"""Command-line pipeline: synth -> aggregate -> train -> eval/temporal/completeness.

Exit codes: 0 success, 2 usage or I/O problems, 3 data errors, 4 numeric
failures during training. Config precedence everywhere is CLI flag over
config-file value over built-in default. Output directories get exactly one
``manifest.json`` and are never overwritten without ``--force``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from dataclasses import fields as dataclass_fields
from pathlib import Path

from . import __version__
from .aggregation import SignatureDataset, aggregate
from .completeness import completeness_report
from .errors import ConfigError, DivergenceError, KbDemandError
from .evaluation import EvalConfig, cross_validate, temporal_eval
from .ingestion import load_kb_snapshot, load_usage_log
from .manifest import build_manifest, write_manifest
from .models import TrainConfig, fit, load_model, save_model
from .reporting import write_completeness_reports, write_eval_reports, write_temporal_reports
from .synthgen import GenConfig, PRESETS, generate
from . import plots

log = logging.getLogger("kbdemand")

MODEL_CHOICES = ("freq", "regr", "nn")


def _parse_range(text: str) -> tuple:
    parts = text.replace(":", ",").split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI range, got {text!r}")
    return (int(parts[0]), int(parts[1]))


def parse_config_file(path) -> dict:
    """Flat ``key = value`` text config; blank lines and # comments ignored."""
    values = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _coerce_gen_value(name: str, raw: str):
    if name in ("classes_per_entity", "clauses_per_entity"):
        return _parse_range(raw)
    if name in ("seed", "n_classes", "n_relations", "n_entities", "n_periods"):
        return int(raw)
    if name == "usage_zipf_alpha":
        return None if raw.lower() in ("none", "") else float(raw)
    return float(raw)


def _gen_config(args) -> GenConfig:
    base = PRESETS[args.preset]() if args.preset else GenConfig()
    values = {f.name: getattr(base, f.name) for f in dataclass_fields(GenConfig)}
    if args.config:
        file_values = parse_config_file(args.config)
        unknown = set(file_values) - set(values)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        for key, raw in file_values.items():
            values[key] = _coerce_gen_value(key, raw)
    overrides = {
        "seed": args.seed,
        "n_classes": args.n_classes,
        "n_relations": args.n_relations,
        "n_entities": args.n_entities,
        "classes_per_entity": args.classes_per_entity,
        "clauses_per_entity": args.clauses_per_entity,
        "interaction_strength": args.interaction_strength,
        "drift_rate": args.drift_rate,
        "n_periods": args.n_periods,
        "gap_rate": args.gap_rate,
        "usage_zipf_alpha": args.zipf_alpha,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    return GenConfig(**values)


def _ensure_out_dir(path, force: bool) -> Path:
    out = Path(path)
    if out.exists():
        if not out.is_dir():
            raise OSError(f"output path {out} exists and is not a directory")
        if any(out.iterdir()) and not force:
            raise OSError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ensure_out_file(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not force:
        raise OSError(f"output file {out} exists (use --force to overwrite)")
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _train_config(args) -> TrainConfig:
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    defaults = TrainConfig()
    ints = {"seed", "epochs", "batch_size", "hidden"}
    floats = {"learning_rate", "l2", "truncation_threshold"}
    known = {f.name for f in dataclass_fields(TrainConfig)}
    unknown = set(file_values) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    values = {}
    for f in dataclass_fields(TrainConfig):
        if f.name in file_values:
            raw = file_values[f.name]
            if f.name in ints:
                values[f.name] = int(raw)
            elif f.name in floats:
                values[f.name] = float(raw)
            else:
                values[f.name] = raw.lower() in ("1", "true", "yes", "on")
        else:
            values[f.name] = getattr(defaults, f.name)
    flag_map = {
        "seed": args.seed,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "l2": args.l2,
        "hidden": args.hidden,
    }
    for key, value in flag_map.items():
        if value is not None:
            values[key] = value
    if getattr(args, "freq_mode", None):
        values["freq_mean_of_normalized"] = args.freq_mode == "mean"
    return TrainConfig(**values)


def _model_kinds(spec: str) -> list:
    kinds = MODEL_CHOICES if spec == "all" else tuple(k.strip() for k in spec.split(","))
    for kind in kinds:
        if kind not in MODEL_CHOICES:
            raise ConfigError(f"unknown model {kind!r}; choose from {', '.join(MODEL_CHOICES)} or 'all'")
    return list(dict.fromkeys(kinds))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _gen_config(args)
    out = _ensure_out_dir(args.out, args.force)
    data = generate(cfg)
    paths = data.write(out)
    manifest = build_manifest(
        command="synth",
        config={f.name: getattr(cfg, f.name) for f in dataclass_fields(GenConfig)},
        seeds={"generator": cfg.seed},
        inputs=[args.config] if args.config else [],
        outputs=[p.name for p in paths],
    )
    write_manifest(manifest, out)
    log.info("synth: wrote %d file(s) to %s", len(paths), out)
    print(f"synth: {len(data.kb)} entities, {len(data.truth.by_signature)} signatures, "
          f"{len(data.periods)} period(s) -> {out}")
    return 0


def cmd_aggregate(args) -> int:
    out = _ensure_out_dir(args.out, args.force)
    records = []
    for usage_path in args.usage:
        records.extend(load_usage_log(usage_path, max_malformed_fraction=args.max_malformed))
    kb = load_kb_snapshot(args.kb)
    ds = aggregate(records, kb, min_support=args.min_support)
    dataset_path = out / "dataset.ndjson"
    ds.save(dataset_path)
    manifest = build_manifest(
        command="aggregate",
        config={"min_support": args.min_support, "max_malformed": args.max_malformed},
        seeds={},
        inputs=list(args.usage) + [args.kb],
        outputs=[dataset_path.name],
    )
    write_manifest(manifest, out)
    print(f"aggregate: {len(ds)} signatures, {ds.vocabulary.n_classes} classes, "
          f"{ds.vocabulary.n_relations} relations, {ds.skipped_records} skipped record(s) -> {dataset_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    out = _ensure_out_file(args.out, args.force)
    ds = SignatureDataset.load(args.dataset)
    model = fit(args.model, ds, cfg)
    save_model(model, out)
    if model.kind == "neural" and model.loss_history:
        log.info("train: final KL loss %.6f (initial %.6f)", model.loss_history[-1], model.loss_history[0])
        print(f"train: {args.model} model, final loss {model.loss_history[-1]:.6f} -> {out}")
    else:
        print(f"train: {args.model} model, {model.param_count()} parameters -> {out}")
    manifest = build_manifest(
        command="train",
        config={"model": args.model, **{f.name: getattr(cfg, f.name) for f in dataclass_fields(TrainConfig)}},
        seeds={"train": cfg.seed},
        inputs=[args.dataset],
        outputs=[out.name],
    )
    write_manifest(manifest, Path(str(out) + ".manifest.json"))
    return 0


def cmd_eval(args) -> int:
    if args.folds < 2:
        raise ConfigError(f"--folds must be >= 2, got {args.folds}")
    kinds = _model_kinds(args.model)
    cfg = _train_config(args)
    eval_cfg = EvalConfig(threshold=args.threshold, weight_by_usage=args.weighted == "on")
    out = _ensure_out_dir(args.out, args.force)
    ds = SignatureDataset.load(args.dataset)
    results = {}
    for kind in kinds:
        results[kind] = cross_validate(
            ds, kind, cfg, eval_cfg, k=args.folds, seed=args.seed if args.seed is not None else cfg.seed,
            jobs=args.jobs,
        )
        summary = results[kind].summary
        print(f"eval: {kind}\tjaccard {summary.jaccard:.4f}\tfalse_neg {summary.false_neg:.4f}\t"
              f"false_pos {summary.false_pos:.4f}\tintersection {summary.intersection:.4f}")
    paths = write_eval_reports(out, Path(args.dataset).name, results)
    figures = [
        plots.save_metric_bars(results, out / "metrics.png"),
        plots.save_fold_plot(results, out / "folds.png"),
    ]
    manifest = build_manifest(
        command="eval",
        config={
            "models": kinds,
            "folds": args.folds,
            "threshold": args.threshold,
            "weighted": args.weighted,
            "jobs": args.jobs,
            **{f.name: getattr(cfg, f.name) for f in dataclass_fields(TrainConfig)},
        },
        seeds={"cv": args.seed if args.seed is not None else cfg.seed, "train": cfg.seed},
        inputs=[args.dataset],
        outputs=[p.name for p in paths + figures],
    )
    write_manifest(manifest, out)
    return 0


def cmd_temporal(args) -> int:
    cfg = _train_config(args)
    eval_cfg = EvalConfig(threshold=args.threshold)
    out = _ensure_out_dir(args.out, args.force)
    train_ds = SignatureDataset.load(args.train)
    futures = []
    for i, path in enumerate(args.future, start=1):
        futures.append((f"T{i}", SignatureDataset.load(path)))
    results = temporal_eval(train_ds, futures, model_kind=args.model, cfg=cfg, eval_cfg=eval_cfg)
    for res in results:
        print(f"temporal: {res.label}\tjaccard {res.unweighted.jaccard:.4f}\t"
              f"intersection {res.unweighted.intersection:.4f}")
    paths = write_temporal_reports(out, Path(args.train).name, args.model, results)
    figures = [plots.save_temporal_plot(results, out / "temporal.png")]
    manifest = build_manifest(
        command="temporal",
        config={
            "model": args.model,
            "threshold": args.threshold,
            **{f.name: getattr(cfg, f.name) for f in dataclass_fields(TrainConfig)},
        },
        seeds={"train": cfg.seed},
        inputs=[args.train] + list(args.future),
        outputs=[p.name for p in paths + figures],
    )
    write_manifest(manifest, out)
    return 0


def cmd_completeness(args) -> int:
    out = _ensure_out_dir(args.out, args.force)
    model = load_model(args.model)
    kb = load_kb_snapshot(args.kb)
    usage_records = load_usage_log(args.usage)
    usage = Counter()
    for rec in usage_records:
        usage[rec.entity] += rec.count
    entities = sorted(kb.entities)
    report = completeness_report(
        model, kb, entities, usage, threshold=args.threshold, top_k=args.top_k
    )
    print(f"completeness: subset score {report.subset_score:.4f} over "
          f"{len(report.per_entity)} weighted entities (threshold {args.threshold})")
    for gap in report.gaps[:5]:
        print(f"  gap: {gap.relation}\tmissing_mass {gap.missing_mass:.4f}\t"
              f"delta {gap.completeness_delta:.4f}")
    paths = write_completeness_reports(out, report)
    figures = [
        plots.save_completeness_hist(
            [item.score for item in report.per_entity], report.subset_score, out / "completeness.png"
        ),
        plots.save_gap_bars(report.gaps, out / "gaps.png"),
    ]
    manifest = build_manifest(
        command="completeness",
        config={"threshold": args.threshold, "top_k": args.top_k},
        seeds={},
        inputs=[args.model, args.kb, args.usage],
        outputs=[p.name for p in paths + figures],
    )
    write_manifest(manifest, out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_train_flags(sub) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--epochs", type=int, default=None)
    sub.add_argument("--lr", type=float, default=None, help="learning rate")
    sub.add_argument("--hidden", type=int, default=None, help="hidden layer width")
    sub.add_argument("--batch-size", type=int, default=None)
    sub.add_argument("--l2", type=float, default=None, help="ridge regularization")
    sub.add_argument("--freq-mode", choices=("sum", "mean"), default=None,
                     help="frequency combiner: sum raw counts (default) or mean of normalized")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbdemand",
        description="Demand-weighted completeness analytics for knowledge bases.",
    )
    parser.add_argument("--version", action="version", version=f"kbdemand {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="generate a synthetic KB, usage logs and ground truth")
    synth.add_argument("--config", help="flat key=value generator config")
    synth.add_argument("--preset", choices=sorted(PRESETS), default=None)
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--n-classes", type=int, default=None)
    synth.add_argument("--n-relations", type=int, default=None)
    synth.add_argument("--n-entities", type=int, default=None)
    synth.add_argument("--classes-per-entity", type=_parse_range, default=None, metavar="LO,HI")
    synth.add_argument("--clauses-per-entity", type=_parse_range, default=None, metavar="LO,HI")
    synth.add_argument("--interaction-strength", type=float, default=None)
    synth.add_argument("--drift-rate", type=float, default=None)
    synth.add_argument("--n-periods", type=int, default=None)
    synth.add_argument("--gap-rate", type=float, default=None)
    synth.add_argument("--zipf-alpha", type=float, default=None)
    synth.add_argument("--out", required=True)
    synth.add_argument("--force", action="store_true")
    synth.set_defaults(func=cmd_synth)

    agg = commands.add_parser("aggregate", help="aggregate usage logs into a signature dataset")
    agg.add_argument("--usage", nargs="+", required=True, help="usage log NDJSON path(s)")
    agg.add_argument("--kb", required=True, help="KB snapshot NDJSON path")
    agg.add_argument("--min-support", type=int, default=1)
    agg.add_argument("--max-malformed", type=float, default=0.01)
    agg.add_argument("--out", required=True)
    agg.add_argument("--force", action="store_true")
    agg.set_defaults(func=cmd_aggregate)

    train = commands.add_parser("train", help="fit one predictor on a dataset")
    train.add_argument("--dataset", required=True)
    train.add_argument("--model", choices=MODEL_CHOICES, required=True)
    _add_train_flags(train)
    train.add_argument("--out", required=True, help="model file path")
    train.add_argument("--force", action="store_true")
    train.set_defaults(func=cmd_train)

    evl = commands.add_parser("eval", help="grouped k-fold cross-validation with reports and figures")
    evl.add_argument("--dataset", required=True)
    evl.add_argument("--model", default="all",
                     help="freq, regr, nn, a comma list, or 'all' (default)")
    evl.add_argument("--folds", type=int, default=10)
    evl.add_argument("--threshold", type=float, default=0.95)
    evl.add_argument("--weighted", choices=("on", "off"), default="off",
                     help="headline numbers usage-weighted (reports always carry both)")
    evl.add_argument("--jobs", type=int, default=1, help="parallel fold jobs")
    _add_train_flags(evl)
    evl.add_argument("--out", required=True)
    evl.add_argument("--force", action="store_true")
    evl.set_defaults(func=cmd_eval)

    temporal = commands.add_parser("temporal", help="train once, evaluate against future periods")
    temporal.add_argument("--train", required=True, help="training dataset path")
    temporal.add_argument("--future", nargs="+", required=True, help="future dataset path(s), in period order")
    temporal.add_argument("--model", choices=MODEL_CHOICES, default="nn")
    temporal.add_argument("--threshold", type=float, default=0.95)
    _add_train_flags(temporal)
    temporal.add_argument("--out", required=True)
    temporal.add_argument("--force", action="store_true")
    temporal.set_defaults(func=cmd_temporal)

    comp = commands.add_parser("completeness", help="score a KB against predicted demand")
    comp.add_argument("--model", required=True, help="trained model file")
    comp.add_argument("--kb", required=True)
    comp.add_argument("--usage", required=True)
    comp.add_argument("--threshold", type=float, default=0.95)
    comp.add_argument("--top-k", type=int, default=20)
    comp.add_argument("--out", required=True)
    comp.add_argument("--force", action="store_true")
    comp.set_defaults(func=cmd_completeness)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except KbDemandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
