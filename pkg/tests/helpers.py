"""Shared test utilities: toy tensor datasets, brute-force oracles, hashing."""

import hashlib
import math
from pathlib import Path

import numpy as np

from ice_localizer.corpus import PacingClass, ViewLabel
from ice_localizer.evaluate import FoldReport
from ice_localizer.train import Sample

VIEW_COLS = ["TV", "MV", "LPV", "CT", "CROSS_VIEW"]


def brute_force_mode(votes):
    """Independent mode-with-lowest-id-tie oracle: plain counting."""
    counts = [0, 0, 0]
    for v in votes:
        counts[int(v)] += 1
    best = max(counts)
    for cls in range(3):
        if counts[cls] == best:
            return cls


def tree_hash(root) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def toy_beat(rng, pacing: int, t_n: int = 32, size: int = 32) -> np.ndarray:
    """Tiny phase-coded moving-blob clip, same signal family as the corpus."""
    cy = cx = size / 2
    rad = size / 4
    phase0 = pacing * 2 * math.pi / 3 + rng.normal(0, 0.05)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    frames = np.empty((1, t_n, size, size), np.float32)
    for t in range(t_n):
        th = phase0 + 2 * math.pi * t / t_n
        by, bx = cy + rad * math.sin(th), cx + rad * math.cos(th)
        blob = 0.8 * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * (size / 10) ** 2))
        frames[0, t] = np.clip(0.1 + blob, 0, 1)
    return frames


def toy_samples(patient_ids, beats_per_class=4, view=ViewLabel.TV, seed=0,
                t_n=32, size=32):
    """One Sample per (patient, class, beat) with phase-separable content."""
    rng = np.random.default_rng(seed)
    samples = []
    for pid in patient_ids:
        for pacing in PacingClass:
            for b in range(beats_per_class):
                clip_id = f"{pid}_{view.name}_{pacing.name}"
                samples.append(
                    Sample(
                        patient_id=pid,
                        clip_id=clip_id,
                        view=view,
                        pacing=pacing,
                        key=f"{pid}/{clip_id}/b{b}",
                        tensor=toy_beat(rng, int(pacing), t_n, size),
                    )
                )
    return samples


def reports_from_table(rows) -> list[FoldReport]:
    """Wrap printed per-fold accuracy rows as FoldReport objects."""
    reports = []
    for i, row in enumerate(rows):
        reports.append(
            FoldReport(
                fold_index=i,
                per_view={"TV": row[0], "MV": row[1], "LPV": row[2], "CT": row[3]},
                cross_view=row[4],
                counts={},
            )
        )
    return reports
