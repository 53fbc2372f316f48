"""Per-(fold, view) training: AdamW with class-weighted cross-entropy, global
gradient clipping, validation-accuracy early stopping, an overfit guard, and
an optional plateau learning-rate halver."""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from . import augment
from .corpus import PacingClass, ViewLabel
from .evaluate import SamplePrediction
from .folds import FoldSpec
from .model import ActivationSourceNet, ModelConfig, build_model


class TrainError(Exception):
    pass


class ConfigurationError(TrainError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-5
    weight_decay: float = 1e-3
    class_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    max_epochs: int = 150
    early_stop_patience: int = 20
    batch_size: int = 8
    grad_clip_norm: float = 1.0
    use_plateau_scheduler: bool = False
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    overfit_train_acc: float = 0.90
    overfit_patience: int = 10
    mixed_precision: bool = False
    seed: int = 0

    def check(self):
        if self.lr <= 0 or self.weight_decay < 0 or self.batch_size < 1:
            raise ConfigurationError("lr/weight_decay/batch_size out of range")
        if min(self.class_weights) <= 0:
            raise ConfigurationError("class weights must be positive")
        for name in ("early_stop_patience", "plateau_patience", "overfit_patience"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")


@dataclass
class TrainState:
    epoch: int = 0
    best_val_acc: float = -1.0
    best_epoch: int = -1
    epochs_since_best: int = 0
    lr_current: float = 0.0
    stop_reason: str = "none"
    overfit_streak: int = 0
    plateau_best_loss: float = math.inf
    plateau_since_best: int = 0


def early_stop_step(state: TrainState, val_acc: float, cfg: TrainConfig) -> TrainState:
    """Strict improvement resets the counter; patience exhaustion stops."""
    if val_acc > state.best_val_acc:
        state.best_val_acc = val_acc
        state.best_epoch = state.epoch
        state.epochs_since_best = 0
    else:
        state.epochs_since_best += 1
        if state.epochs_since_best >= cfg.early_stop_patience and state.stop_reason == "none":
            state.stop_reason = "early_stop"
    return state


def overfit_guard_step(
    state: TrainState, train_acc: float, val_improved: bool, cfg: TrainConfig
) -> TrainState:
    """Stop when training accuracy stays above the guard level while validation
    fails to improve for overfit_patience consecutive epochs."""
    if train_acc > cfg.overfit_train_acc and not val_improved:
        state.overfit_streak += 1
    else:
        state.overfit_streak = 0
    if state.overfit_streak >= cfg.overfit_patience and state.stop_reason == "none":
        state.stop_reason = "overfit_guard"
    return state


def plateau_scheduler_step(state: TrainState, val_loss: float, cfg: TrainConfig) -> TrainState:
    if not cfg.use_plateau_scheduler:
        return state
    if val_loss < state.plateau_best_loss:
        state.plateau_best_loss = val_loss
        state.plateau_since_best = 0
    else:
        state.plateau_since_best += 1
        if state.plateau_since_best >= cfg.plateau_patience:
            state.lr_current *= cfg.plateau_factor
            state.plateau_since_best = 0
    return state


def weighted_cross_entropy(logits, targets, weights) -> torch.Tensor:
    """Batch mean of w[y] * (-log softmax(logits)[y]), normalized by the batch's
    mean weight (matches the per-batch weighted mean convention)."""
    if not torch.is_tensor(weights):
        weights = torch.tensor(weights, dtype=logits.dtype)
    n_classes = logits.shape[1]
    if targets.numel() and (targets.min() < 0 or targets.max() >= n_classes):
        raise TrainError(f"targets must lie in [0, {n_classes})")
    return F.cross_entropy(logits, targets, weight=weights.to(logits.dtype))


# --------------------------------------------------------------------------
# data plumbing
# --------------------------------------------------------------------------


@dataclass
class Sample:
    """One standardized heartbeat with its provenance labels."""

    patient_id: str
    clip_id: str
    view: ViewLabel
    pacing: PacingClass
    key: str
    tensor: np.ndarray  # float32, (1, target_frames, H, W)


@dataclass
class TrainResult:
    model: ActivationSourceNet
    best_epoch: int
    best_val_acc: float
    stop_reason: str
    epoch_metrics: list[dict]
    optimizer_patient_ids: set[str] = field(default_factory=set)
    augmented_sample_keys: set[str] = field(default_factory=set)
    max_postclip_grad_norm: float = 0.0


def _stack(samples: list[Sample]):
    x = torch.from_numpy(np.stack([s.tensor for s in samples]))  # (B, 1, T, H, W)
    y = torch.tensor([int(s.pacing) for s in samples], dtype=torch.long)
    return x, y


def evaluate_samples(
    model: ActivationSourceNet,
    samples: list[Sample],
    weights,
    batch_size: int = 16,
) -> tuple[float, float, list[SamplePrediction]]:
    """Sample-level accuracy (fraction), weighted loss, and raw predictions."""
    model.eval()
    x, y = _stack(samples)
    preds = []
    losses = []
    correct = 0
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            xb, yb = x[i : i + batch_size], y[i : i + batch_size]
            logits = model(xb)
            losses.append(weighted_cross_entropy(logits, yb, weights).item() * len(yb))
            pred = logits.argmax(dim=1)
            correct += int((pred == yb).sum())
            for s, p in zip(samples[i : i + batch_size], pred.tolist()):
                preds.append(
                    SamplePrediction(
                        patient_id=s.patient_id,
                        clip_id=s.clip_id,
                        view=s.view,
                        true_pacing=s.pacing,
                        predicted_pacing=PacingClass(p),
                    )
                )
    n = max(len(samples), 1)
    return correct / n, sum(losses) / n, preds


def _grad_global_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return math.sqrt(total)


def train_fold_view(
    fold: FoldSpec,
    view: ViewLabel,
    samples: list[Sample],
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    aug_cfg: augment.AugmentConfig | None = None,
) -> TrainResult:
    """Train one view-specific model on the fold's training patients.

    Augmentation (when configured) is applied to training samples only; the
    result records which patients fed the optimizer so leakage can be audited.
    """
    cfg.check()
    view_samples = [s for s in samples if s.view == view]
    train_samples = [s for s in view_samples if s.patient_id in fold.train_ids]
    val_samples = [s for s in view_samples if s.patient_id in fold.val_ids]
    if not train_samples or not val_samples:
        raise ConfigurationError(
            f"fold {fold.fold_index} view {view.name}: empty train or validation split"
        )
    train_classes = {int(s.pacing) for s in train_samples}
    if train_classes != {0, 1, 2}:
        raise ConfigurationError(
            f"fold {fold.fold_index} view {view.name}: training split misses classes "
            f"{sorted({0, 1, 2} - train_classes)}"
        )

    torch.manual_seed(cfg.seed)
    model = build_model(model_cfg)

    aug_keys: set[str] = set()
    train_x_list = [s.tensor for s in train_samples]
    train_y_list = [int(s.pacing) for s in train_samples]
    train_pid_list = [s.patient_id for s in train_samples]
    if aug_cfg is not None and aug_cfg.variants_per_sample > 0:
        for s in train_samples:
            for v in augment.make_variants(s.tensor, aug_cfg, s.key):
                train_x_list.append(v)
                train_y_list.append(int(s.pacing))
                train_pid_list.append(s.patient_id)
            aug_keys.add(s.key)

    x_train = torch.from_numpy(np.stack(train_x_list))  # (N, 1, T, H, W)
    y_train = torch.tensor(train_y_list, dtype=torch.long)
    weights = torch.tensor(cfg.class_weights, dtype=torch.float32)

    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    state = TrainState(lr_current=cfg.lr)
    result = TrainResult(
        model=model,
        best_epoch=-1,
        best_val_acc=-1.0,
        stop_reason="none",
        epoch_metrics=[],
        augmented_sample_keys=aug_keys,
    )
    best_params = None
    n_train = len(train_y_list)

    for epoch in range(1, cfg.max_epochs + 1):
        state.epoch = epoch
        for group in optimizer.param_groups:
            group["lr"] = state.lr_current
        perm = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, fold.fold_index, int(view), epoch])
        ).permutation(n_train)
        model.train()
        epoch_loss = 0.0
        correct = 0
        for i in range(0, n_train, cfg.batch_size):
            idx = torch.from_numpy(perm[i : i + cfg.batch_size].copy())
            xb, yb = x_train[idx], y_train[idx]
            optimizer.zero_grad(set_to_none=True)
            if cfg.mixed_precision:
                with torch.autocast("cpu", dtype=torch.bfloat16):
                    logits = model(xb)
                    loss = weighted_cross_entropy(logits.float(), yb, weights)
            else:
                logits = model(xb)
                loss = weighted_cross_entropy(logits, yb, weights)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
            result.max_postclip_grad_norm = max(
                result.max_postclip_grad_norm, _grad_global_norm(model.parameters())
            )
            optimizer.step()
            epoch_loss += loss.item() * len(yb)
            correct += int((logits.detach().argmax(dim=1) == yb).sum())
            result.optimizer_patient_ids.update(train_pid_list[j] for j in idx.tolist())
        train_loss = epoch_loss / n_train
        train_acc = correct / n_train

        val_acc, val_loss, _ = evaluate_samples(model, val_samples, weights)
        val_improved = val_acc > state.best_val_acc
        if val_improved:
            best_params = copy.deepcopy(model.state_dict())
            result.best_epoch = epoch
            result.best_val_acc = val_acc
        early_stop_step(state, val_acc, cfg)
        overfit_guard_step(state, train_acc, val_improved, cfg)
        plateau_scheduler_step(state, val_loss, cfg)
        result.epoch_metrics.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "train_acc": train_acc,
                "val_loss": val_loss,
                "val_acc": val_acc,
                "lr": state.lr_current,
                "stop_reason": state.stop_reason,
            }
        )
        if state.stop_reason != "none":
            break
    if state.stop_reason == "none":
        state.stop_reason = "max_epochs"
        result.epoch_metrics[-1]["stop_reason"] = "max_epochs"
    result.stop_reason = state.stop_reason

    if best_params is not None:
        model.load_state_dict(best_params)
    model.eval()
    return result


EPOCH_CSV_FIELDS = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr", "stop_reason"]


def write_epoch_csv(rows: list[dict], path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EPOCH_CSV_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in EPOCH_CSV_FIELDS})
