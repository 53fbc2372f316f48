"""Three-level evaluation: sample accuracy, clip-level majority voting, and
cross-view patient-level fusion, with per-fold tables and mean aggregation."""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, asdict
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path

from .corpus import PacingClass, ViewLabel

VIEW_COLUMNS = [v.name for v in ViewLabel]
TABLE_COLUMNS = VIEW_COLUMNS + ["CROSS_VIEW"]


class EvaluateError(Exception):
    pass


@dataclass
class SamplePrediction:
    patient_id: str
    clip_id: str
    view: ViewLabel
    true_pacing: PacingClass
    predicted_pacing: PacingClass


@dataclass
class FoldReport:
    fold_index: int
    # accuracy percent per view column, None when the fold has no clips of that view
    per_view: dict[str, float | None]
    cross_view: float | None
    counts: dict[str, int]

    def column(self, name: str) -> float | None:
        if name == "CROSS_VIEW":
            return self.cross_view
        return self.per_view.get(name)


def round2(value) -> float:
    """Half-up rounding to two decimals (table formatting convention)."""
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def accuracy(preds: list, truths: list) -> float:
    """Percentage of correct predictions: 100 * correct / total."""
    if len(preds) != len(truths):
        raise EvaluateError(f"length mismatch: {len(preds)} predictions vs {len(truths)} truths")
    if not preds:
        raise EvaluateError("accuracy of an empty prediction list is undefined")
    correct = sum(1 for p, t in zip(preds, truths) if int(p) == int(t))
    return 100.0 * correct / len(preds)


def _mode_lowest(votes) -> int:
    """Modal value; ties broken by the lowest class id."""
    counts = Counter(int(v) for v in votes)
    best = max(counts.values())
    return min(cls for cls, n in counts.items() if n == best)


def clip_vote(samples: list[SamplePrediction]) -> PacingClass:
    """Majority vote across all heartbeat predictions of one clip."""
    if not samples:
        raise EvaluateError("clip_vote needs at least one sample")
    clip_ids = {s.clip_id for s in samples}
    if len(clip_ids) != 1:
        raise EvaluateError(f"clip_vote got mixed clip ids: {sorted(clip_ids)}")
    return PacingClass(_mode_lowest(s.predicted_pacing for s in samples))


def cross_view_vote(clip_preds: dict[ViewLabel, PacingClass]) -> PacingClass:
    """Majority vote over the available views' clip-level decisions."""
    if not clip_preds:
        raise EvaluateError("cross_view_vote needs at least one view")
    return PacingClass(_mode_lowest(clip_preds.values()))


def fold_report(fold_index: int, predictions: list[SamplePrediction]) -> FoldReport:
    """Clip-level accuracy per view plus the fused cross-view accuracy.

    Units are (patient, pacing condition) decisions; a view absent for some
    patient simply drops out of that view's denominator.
    """
    by_clip: dict[str, list[SamplePrediction]] = defaultdict(list)
    for s in predictions:
        by_clip[s.clip_id].append(s)

    # (patient, pacing) -> view -> list of clip decisions
    units: dict[tuple[str, PacingClass], dict[ViewLabel, list[PacingClass]]] = defaultdict(
        lambda: defaultdict(list)
    )
    view_hits: dict[ViewLabel, list[bool]] = defaultdict(list)
    for samples in by_clip.values():
        decision = clip_vote(samples)
        ref = samples[0]
        view_hits[ref.view].append(decision == ref.true_pacing)
        units[(ref.patient_id, ref.true_pacing)][ref.view].append(decision)

    per_view = {}
    counts = {}
    for view in ViewLabel:
        hits = view_hits.get(view, [])
        counts[view.name] = len(hits)
        per_view[view.name] = 100.0 * sum(hits) / len(hits) if hits else None

    fused_hits = []
    for (_, true_pacing), view_map in units.items():
        view_decisions = {
            view: PacingClass(_mode_lowest(decisions)) for view, decisions in view_map.items()
        }
        fused_hits.append(cross_view_vote(view_decisions) == true_pacing)
    counts["CROSS_VIEW"] = len(fused_hits)
    cross = 100.0 * sum(fused_hits) / len(fused_hits) if fused_hits else None
    return FoldReport(fold_index=fold_index, per_view=per_view, cross_view=cross, counts=counts)


def aggregate_means(reports: list[FoldReport]) -> dict[str, float | None]:
    """Arithmetic mean per column over folds, half-up rounded to two decimals.

    Accumulates in decimal so that two-decimal inputs aggregate exactly.
    """
    if not reports:
        raise EvaluateError("aggregate_means needs at least one report")
    means: dict[str, float | None] = {}
    for col in TABLE_COLUMNS:
        vals = [r.column(col) for r in reports if r.column(col) is not None]
        if not vals:
            means[col] = None
            continue
        total = sum(Decimal(str(v)) for v in vals)
        means[col] = float(
            (total / len(vals)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
        )
    return means


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def write_predictions_jsonl(predictions: list[SamplePrediction], path):
    with open(path, "w") as fh:
        for s in predictions:
            rec = asdict(s)
            rec["view"] = s.view.name
            rec["true_pacing"] = s.true_pacing.name
            rec["predicted_pacing"] = s.predicted_pacing.name
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_predictions_jsonl(path) -> list[SamplePrediction]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out.append(
            SamplePrediction(
                patient_id=rec["patient_id"],
                clip_id=rec["clip_id"],
                view=ViewLabel[rec["view"]],
                true_pacing=PacingClass[rec["true_pacing"]],
                predicted_pacing=PacingClass[rec["predicted_pacing"]],
            )
        )
    return out


def _fmt(v) -> str:
    return "" if v is None else f"{round2(v):.2f}"


def write_table_csv(reports: list[FoldReport], path):
    """Per-fold rows plus a Mean row, columns Fold, TV, MV, LPV, CT, CROSS_VIEW."""
    means = aggregate_means(reports)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Fold"] + TABLE_COLUMNS)
        for r in sorted(reports, key=lambda r: r.fold_index):
            w.writerow([r.fold_index + 1] + [_fmt(r.column(c)) for c in TABLE_COLUMNS])
        w.writerow(["Mean"] + [_fmt(means[c]) for c in TABLE_COLUMNS])


def render_table(reports: list[FoldReport]) -> str:
    """Plain-text table mirroring the CSV layout."""
    means = aggregate_means(reports)
    widths = [6] + [10] * len(TABLE_COLUMNS)
    rows = [["Fold"] + TABLE_COLUMNS]
    for r in sorted(reports, key=lambda r: r.fold_index):
        rows.append([str(r.fold_index + 1)] + [_fmt(r.column(c)) or "-" for c in TABLE_COLUMNS])
    rows.append(["Mean"] + [_fmt(means[c]) or "-" for c in TABLE_COLUMNS])
    return "\n".join(
        " ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows
    )
