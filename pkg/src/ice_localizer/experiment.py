"""Config-driven orchestration: corpus -> preprocessing -> folds -> per-(fold,
view) training -> hierarchical evaluation -> tables, summary and audit trail."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import augment as augment_mod
from .augment import AugmentConfig
from .corpus import (
    DatasetManifest,
    PacingClass,
    SynthConfig,
    ViewLabel,
    generate_synthetic,
    load_clip_raw,
    parse_manifest,
)
from .evaluate import (
    FoldReport,
    SamplePrediction,
    aggregate_means,
    fold_report,
    render_table,
    write_table_csv,
)
from .folds import FoldSpec, export_folds, make_folds
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .preprocess import PreprocessConfig, preprocess_pipeline
from .train import (
    ConfigurationError,
    Sample,
    TrainConfig,
    evaluate_samples,
    train_fold_view,
    write_epoch_csv,
)

DETERMINISM_ENV = "ICE_LOCALIZER_DETERMINISTIC"


class ExperimentError(Exception):
    pass


class ConfigError(ExperimentError):
    pass


@dataclass
class SyntheticSpec:
    n_patients: int = 12
    seed: int = 7
    mode: str = "small"  # "small" or "full"
    dir: str | None = None  # default: <out_dir>/corpus

    def synth_config(self) -> SynthConfig:
        if self.mode == "small":
            return SynthConfig.small()
        if self.mode == "full":
            return SynthConfig()
        raise ConfigError(f"unknown synthetic mode '{self.mode}'")


@dataclass
class ExperimentConfig:
    out_dir: str
    manifest: str | None = None
    synthetic: SyntheticSpec | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    n_folds: int = 10
    fold_window: int = 4
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    views: list[str] = field(default_factory=lambda: [v.name for v in ViewLabel])
    folds_to_run: list[int] | None = None
    seed: int = 0

    def check(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ConfigError("config needs exactly one corpus source: manifest or synthetic")
        for name in self.views:
            if name not in ViewLabel.__members__:
                raise ConfigError(f"unknown view '{name}'")
        if self.n_folds < 1 or self.fold_window < 1:
            raise ConfigError("n_folds and fold_window must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            d = dict(raw)
            if d.get("synthetic") is not None:
                d["synthetic"] = SyntheticSpec(**d["synthetic"])
            for key, klass in (
                ("preprocess", PreprocessConfig),
                ("augment", AugmentConfig),
                ("train", TrainConfig),
            ):
                if key in d and isinstance(d[key], dict):
                    kw = dict(d[key])
                    for tup_key in ("crop_size", "crop_origin", "brightness_range",
                                    "contrast_range", "class_weights"):
                        if kw.get(tup_key) is not None:
                            kw[tup_key] = tuple(kw[tup_key])
                    d[key] = klass(**kw)
            if "model" in d and isinstance(d["model"], dict):
                d["model"] = ModelConfig.from_dict(d["model"])
            cfg = cls(**d)
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigError(f"bad experiment config: {e}") from None
        cfg.check()
        return cfg

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from None
        return cls.from_dict(raw)


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def cell_key(fold_index: int, view: ViewLabel) -> str:
    return f"fold_{fold_index}/view_{view.name}"


def _cell_seed(base: int, fold_index: int, view: ViewLabel) -> int:
    return base + 1009 * fold_index + 101 * int(view)


def _sample_key(patient_id: str, clip_id: str, beat_index: int) -> str:
    return f"{patient_id}/{clip_id}/b{beat_index}"


def load_view_samples(
    manifest: DatasetManifest, view: ViewLabel, pre_cfg: PreprocessConfig
) -> list[Sample]:
    """Preprocess every beat of every clip of one view into model-ready samples."""
    samples = []
    for patient, clip in manifest.iter_clips():
        if clip.view != view:
            continue
        raw = load_clip_raw(clip, manifest.base_dir)
        beats = preprocess_pipeline(raw, clip.beats, pre_cfg)
        for j, tensor in enumerate(beats):
            samples.append(
                Sample(
                    patient_id=patient.patient_id,
                    clip_id=clip.clip_id,
                    view=view,
                    pacing=clip.pacing,
                    key=_sample_key(patient.patient_id, clip.clip_id, j),
                    tensor=tensor,
                )
            )
    return samples


def _write_split_predictions(path, val_preds, test_preds):
    with open(path, "w") as fh:
        for split, preds in (("val", val_preds), ("test", test_preds)):
            for s in preds:
                rec = {
                    "split": split,
                    "patient_id": s.patient_id,
                    "clip_id": s.clip_id,
                    "view": s.view.name,
                    "true_pacing": s.true_pacing.name,
                    "predicted_pacing": s.predicted_pacing.name,
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _read_split_predictions(path):
    val, test = [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        pred = SamplePrediction(
            patient_id=rec["patient_id"],
            clip_id=rec["clip_id"],
            view=ViewLabel[rec["view"]],
            true_pacing=PacingClass[rec["true_pacing"]],
            predicted_pacing=PacingClass[rec["predicted_pacing"]],
        )
        (val if rec["split"] == "val" else test).append(pred)
    return val, test


def resolve_corpus(cfg: ExperimentConfig, out_dir: Path) -> DatasetManifest:
    if cfg.manifest is not None:
        return parse_manifest(cfg.manifest)
    spec = cfg.synthetic
    corpus_dir = Path(spec.dir) if spec.dir else out_dir / "corpus"
    manifest_path = corpus_dir / "manifest.json"
    if manifest_path.is_file():
        return parse_manifest(manifest_path)
    return generate_synthetic(spec.n_patients, spec.seed, spec.synth_config(), corpus_dir)


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Execute all requested (fold, view) cells and write reports + summary.

    Completed cells (checkpoint, epoch log and predictions already on disk) are
    never retrained; rerunning a finished experiment only rebuilds reports.
    """
    cfg.check()
    if os.environ.get(DETERMINISM_ENV) == "1":
        torch.use_deterministic_algorithms(True)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary").mkdir(exist_ok=True)
    _write_json(cfg.to_dict(), out_dir / "config.json")

    manifest = resolve_corpus(cfg, out_dir)
    folds = make_folds(manifest.ordering, cfg.n_folds, cfg.fold_window)
    export_folds(folds, out_dir / "summary" / "folds.json")
    run_folds = [f for f in folds if cfg.folds_to_run is None or f.fold_index in cfg.folds_to_run]
    views = [ViewLabel[name] for name in cfg.views]

    cells: dict[str, dict] = {}
    audit: dict[str, dict] = {}
    val_preds_by_fold: dict[int, list[SamplePrediction]] = {f.fold_index: [] for f in run_folds}
    test_preds_by_fold: dict[int, list[SamplePrediction]] = {f.fold_index: [] for f in run_folds}

    # augmentation audit: record every make_variants call with the active cell
    current_cell = {"key": None, "train_ids": None}
    augment_calls: dict[str, set[str]] = {}
    violations: list[str] = []

    def audit_hook(sample_key: str):
        pid = sample_key.split("/", 1)[0]
        key = current_cell["key"]
        augment_calls.setdefault(key, set()).add(pid)
        if current_cell["train_ids"] is not None and pid not in current_cell["train_ids"]:
            violations.append(f"{key}: augmentation invoked for non-training patient {pid}")

    augment_mod.set_audit_hook(audit_hook)
    try:
        for view in views:
            view_samples: list[Sample] | None = None
            for fold in run_folds:
                key = cell_key(fold.fold_index, view)
                cell_dir = out_dir / f"fold_{fold.fold_index}" / f"view_{view.name}"
                cell_dir.mkdir(parents=True, exist_ok=True)
                ckpt = cell_dir / "checkpoint.pt"
                preds_path = cell_dir / "preds.jsonl"
                audit_path = cell_dir / "audit.json"
                try:
                    if ckpt.is_file() and preds_path.is_file():
                        _, meta = load_checkpoint(ckpt)
                        cell_audit = json.loads(audit_path.read_text())
                    else:
                        if view_samples is None:
                            view_samples = load_view_samples(manifest, view, cfg.preprocess)
                        current_cell["key"] = key
                        current_cell["train_ids"] = fold.train_ids
                        train_cfg = dataclasses.replace(
                            cfg.train, seed=_cell_seed(cfg.train.seed, fold.fold_index, view)
                        )
                        result = train_fold_view(
                            fold, view, view_samples, train_cfg, cfg.model, cfg.augment
                        )
                        current_cell["key"] = None
                        current_cell["train_ids"] = None
                        weights = cfg.train.class_weights
                        val_samples = [
                            s for s in view_samples if s.patient_id in fold.val_ids
                        ]
                        test_samples = [
                            s for s in view_samples if s.patient_id in fold.test_ids
                        ]
                        val_acc, _, val_p = evaluate_samples(result.model, val_samples, weights)
                        test_acc, _, test_p = evaluate_samples(result.model, test_samples, weights)
                        meta = {
                            "epoch": result.best_epoch,
                            "val_acc": result.best_val_acc,
                            "stop_reason": result.stop_reason,
                            "sample_val_acc": val_acc,
                            "sample_test_acc": test_acc,
                        }
                        save_checkpoint(result.model, meta, ckpt)
                        write_epoch_csv(result.epoch_metrics, cell_dir / "epochs.csv")
                        _write_split_predictions(preds_path, val_p, test_p)
                        cell_audit = {
                            "train_ids": sorted(fold.train_ids),
                            "optimizer_patients": sorted(result.optimizer_patient_ids),
                            "augmented_patients": sorted(
                                augment_calls.get(key, set())
                            ),
                            "max_postclip_grad_norm": result.max_postclip_grad_norm,
                        }
                        _write_json(cell_audit, audit_path)
                    val_p, test_p = _read_split_predictions(preds_path)
                    val_preds_by_fold[fold.fold_index].extend(val_p)
                    test_preds_by_fold[fold.fold_index].extend(test_p)
                    cells[key] = {"status": "done", **meta}
                    audit[key] = cell_audit
                except (ConfigurationError, ExperimentError, OSError) as e:
                    cells[key] = {"status": f"failed: {e}"}
    finally:
        augment_mod.set_audit_hook(None)

    val_reports = [
        fold_report(r, preds) for r, preds in sorted(val_preds_by_fold.items()) if preds
    ]
    test_reports = [
        fold_report(r, preds) for r, preds in sorted(test_preds_by_fold.items()) if preds
    ]
    summary = {
        "config": cfg.to_dict(),
        "cells": cells,
        "audit": audit,
        "augment_violations": sorted(violations),
    }
    if val_reports:
        write_table_csv(val_reports, out_dir / "summary" / "val_table.csv")
        summary["val_table"] = _table_dict(val_reports)
    if test_reports:
        write_table_csv(test_reports, out_dir / "summary" / "test_table.csv")
        summary["test_table"] = _table_dict(test_reports)
    _write_json(summary, out_dir / "summary" / "summary.json")
    return out_dir


def _table_dict(reports: list[FoldReport]) -> dict:
    return {
        "folds": {
            str(r.fold_index): {**r.per_view, "CROSS_VIEW": r.cross_view}
            for r in reports
        },
        "mean": aggregate_means(reports),
    }


def collect_reports(exp_dir) -> tuple[list[FoldReport], list[FoldReport], list[str]]:
    """Rebuild fold reports from per-cell prediction files; returns
    (val_reports, test_reports, missing_cell_names)."""
    exp_dir = Path(exp_dir)
    fold_dirs = sorted(exp_dir.glob("fold_*"))
    if not fold_dirs:
        raise ExperimentError(f"no fold outputs under {exp_dir}")
    val_by_fold: dict[int, list[SamplePrediction]] = {}
    test_by_fold: dict[int, list[SamplePrediction]] = {}
    missing = []
    for fd in fold_dirs:
        r = int(fd.name.split("_")[1])
        for vd in sorted(fd.glob("view_*")):
            preds_path = vd / "preds.jsonl"
            if not preds_path.is_file():
                missing.append(f"{fd.name}/{vd.name}")
                continue
            val_p, test_p = _read_split_predictions(preds_path)
            val_by_fold.setdefault(r, []).extend(val_p)
            test_by_fold.setdefault(r, []).extend(test_p)
    val_reports = [fold_report(r, p) for r, p in sorted(val_by_fold.items()) if p]
    test_reports = [fold_report(r, p) for r, p in sorted(test_by_fold.items()) if p]
    return val_reports, test_reports, missing


def report(exp_dir) -> str:
    """Render the validation and test tables for a (possibly partial) run."""
    val_reports, test_reports, missing = collect_reports(exp_dir)
    blocks = []
    if val_reports:
        blocks.append("Validation (clip-level per view, fused cross-view)")
        blocks.append(render_table(val_reports))
    if test_reports:
        blocks.append("Test (clip-level per view, fused cross-view)")
        blocks.append(render_table(test_reports))
    if missing:
        blocks.append("Missing cells: " + ", ".join(missing))
    if not blocks:
        raise ExperimentError(f"no predictions found under {exp_dir}")
    return "\n".join(blocks)
