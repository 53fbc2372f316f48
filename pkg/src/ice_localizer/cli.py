"""Command-line front end: synth, validate, split, train, eval, gradcam,
report, and run (the full pipeline)."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .corpus import CorpusError, SynthConfig, ViewLabel, generate_synthetic, parse_manifest, validate_manifest
from .evaluate import write_table_csv
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    collect_reports,
    load_view_samples,
    report,
    resolve_corpus,
    run_experiment,
)
from .folds import export_folds, make_folds
from .gradcam import OverlayMeta, compute_gradcam, export_overlay
from .model import load_checkpoint
from .train import evaluate_samples

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ice-localizer",
                                description="Atrial activation source classification pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--out", required=True, help="corpus output directory")
    sp.add_argument("--patients", type=int, default=12)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--mode", choices=["small", "full"], default="small")

    sp = sub.add_parser("validate", help="check a manifest and its frame stores")
    sp.add_argument("--manifest", required=True)

    sp = sub.add_parser("split", help="export circular fold assignments")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--window", type=int, default=4)
    sp.add_argument("--out", default=None, help="JSON output path (default: stdout)")

    for name in ("train", "eval"):
        sp = sub.add_parser(name, help=f"{name} one or more (fold, view) cells")
        sp.add_argument("--config", required=True)
        sp.add_argument("--fold", type=int, default=None)
        sp.add_argument("--view", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("gradcam", help="export annotated heatmap GIFs for one cell")
    sp.add_argument("--config", required=True)
    sp.add_argument("--fold", type=int, required=True)
    sp.add_argument("--view", required=True)
    sp.add_argument("--count", type=int, default=4)
    sp.add_argument("--split", choices=["val", "test"], default="test")

    sp = sub.add_parser("report", help="render the per-fold tables of a run")
    sp.add_argument("--out", required=True, help="experiment directory")

    sp = sub.add_parser("run", help="run the full pipeline from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json_file(args.config)
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed,
                                  train=dataclasses.replace(cfg.train, seed=args.seed))
    if getattr(args, "fold", None) is not None:
        cfg = dataclasses.replace(cfg, folds_to_run=[args.fold])
    if getattr(args, "view", None):
        if args.view not in ViewLabel.__members__:
            raise ConfigError(f"unknown view '{args.view}'")
        cfg = dataclasses.replace(cfg, views=[args.view])
    cfg.check()
    return cfg


def _cmd_synth(args) -> int:
    cfg = SynthConfig.small() if args.mode == "small" else SynthConfig()
    manifest = generate_synthetic(args.patients, args.seed, cfg, args.out)
    print(f"wrote {len(manifest.patients)} patients to {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    manifest = parse_manifest(args.manifest)
    problems = validate_manifest(manifest)
    for p in problems:
        print(p)
    if problems:
        print(f"{len(problems)} violation(s)")
        return EXIT_RUNTIME
    print("manifest OK")
    return EXIT_OK


def _cmd_split(args) -> int:
    manifest = parse_manifest(args.manifest)
    folds = make_folds(manifest.ordering, args.folds, args.window)
    if args.out:
        export_folds(folds, args.out)
        print(f"wrote {len(folds)} folds to {args.out}")
    else:
        table = {
            f"fold_{f.fold_index}": {"test": sorted(f.test_ids), "val": sorted(f.val_ids)}
            for f in folds
        }
        print(json.dumps(table, indent=1, sort_keys=True))
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    out = run_experiment(cfg)
    print(f"experiment written to {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    val_reports, test_reports, missing = collect_reports(cfg.out_dir)
    summary_dir = Path(cfg.out_dir) / "summary"
    summary_dir.mkdir(parents=True, exist_ok=True)
    if val_reports:
        write_table_csv(val_reports, summary_dir / "val_table.csv")
    if test_reports:
        write_table_csv(test_reports, summary_dir / "test_table.csv")
    print(report(cfg.out_dir))
    return EXIT_OK


def _cmd_gradcam(args) -> int:
    cfg = _load_config(args)
    view = ViewLabel[args.view]
    fold_idx = args.fold
    cell_dir = Path(cfg.out_dir) / f"fold_{fold_idx}" / f"view_{view.name}"
    ckpt = cell_dir / "checkpoint.pt"
    if not ckpt.is_file():
        raise ExperimentError(f"no checkpoint for cell fold_{fold_idx}/view_{view.name}")
    model, _ = load_checkpoint(ckpt)
    manifest = resolve_corpus(cfg, Path(cfg.out_dir))
    folds = make_folds(manifest.ordering, cfg.n_folds, cfg.fold_window)
    fold = folds[fold_idx]
    ids = fold.test_ids if args.split == "test" else fold.val_ids
    samples = [s for s in load_view_samples(manifest, view, cfg.preprocess)
               if s.patient_id in ids][: args.count]
    if not samples:
        raise ExperimentError("no samples available for gradcam export")
    out_dir = cell_dir / "gradcam"
    out_dir.mkdir(exist_ok=True)
    _, _, preds = evaluate_samples(model, samples, cfg.train.class_weights)
    for s, p in zip(samples, preds):
        heat = compute_gradcam(model, s.tensor, int(p.predicted_pacing))
        beat = s.key.rsplit("/", 1)[1]
        name = f"{s.patient_id}_{s.clip_id}_{beat}_{s.pacing.name}_{p.predicted_pacing.name}.gif"
        export_overlay(
            s.tensor,
            heat,
            OverlayMeta(
                patient_id=s.patient_id,
                clip_id=s.clip_id,
                true_label=s.pacing.name,
                pred_label=p.predicted_pacing.name,
            ),
            out_dir / name,
        )
        print(f"wrote {out_dir / name}")
    return EXIT_OK


def _cmd_report(args) -> int:
    print(report(args.out))
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    out = run_experiment(cfg)
    print(report(out))
    print(f"experiment written to {out}")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "validate": _cmd_validate,
    "split": _cmd_split,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcam": _cmd_gradcam,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CorpusError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
