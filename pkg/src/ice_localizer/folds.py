"""Circular sliding-window patient-level cross-validation splits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class FoldError(Exception):
    pass


@dataclass
class FoldSpec:
    fold_index: int
    test_ids: set[str]
    val_ids: set[str]
    train_ids: set[str]

    def all_ids(self) -> set[str]:
        return self.test_ids | self.val_ids | self.train_ids


def make_folds(ordering: list[str], n_folds: int = 10, window: int = 4) -> list[FoldSpec]:
    """Fold r takes patients [w*r, w*r+w) of the fixed ordering as test and the
    next w (mod N) as validation; everyone else trains."""
    n = len(ordering)
    if n < 2 * window:
        raise FoldError(f"need at least {2 * window} patients for window {window}, got {n}")
    folds = []
    for r in range(n_folds):
        test_idx = {(window * r + i) % n for i in range(window)}
        val_idx = {(window * r + window + i) % n for i in range(window)}
        if test_idx & val_idx:
            raise FoldError(f"fold {r}: test and validation windows overlap (N too small)")
        test = {ordering[i] for i in test_idx}
        val = {ordering[i] for i in val_idx}
        train = {pid for i, pid in enumerate(ordering) if i not in test_idx and i not in val_idx}
        folds.append(FoldSpec(fold_index=r, test_ids=test, val_ids=val, train_ids=train))
    return folds


def check_disjoint(fold: FoldSpec, all_ids: set[str] | None = None) -> bool:
    """True iff test/val/train are pairwise disjoint and together cover all_ids."""
    if fold.test_ids & fold.val_ids or fold.test_ids & fold.train_ids or fold.val_ids & fold.train_ids:
        return False
    if all_ids is not None and fold.all_ids() != set(all_ids):
        return False
    return True


def export_folds(folds: list[FoldSpec], path):
    table = {
        f"fold_{f.fold_index}": {
            "test": sorted(f.test_ids),
            "val": sorted(f.val_ids),
            "train": sorted(f.train_ids),
        }
        for f in folds
    }
    Path(path).write_text(json.dumps(table, indent=1, sort_keys=True) + "\n")
