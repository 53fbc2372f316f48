"""Dataset manifest schema, loaders, and the synthetic desk-scale corpus generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image

FRAME_NAME = "frame_{:05d}.png"


class CorpusError(Exception):
    pass


class ManifestParseError(CorpusError):
    pass


class FrameLoadError(CorpusError):
    pass


class PacingClass(IntEnum):
    NSR = 0
    DIST = 1
    PROX = 2


class ViewLabel(IntEnum):
    TV = 0
    MV = 1
    LPV = 2
    CT = 3


@dataclass(frozen=True)
class BeatAnnotation:
    """One cardiac cycle: [start_frame, end_frame) with a PR-segment marker inside."""

    start_frame: int
    pr_frame: int
    end_frame: int

    def check(self):
        if not (0 <= self.start_frame <= self.pr_frame < self.end_frame):
            raise ValueError(
                f"beat annotation must satisfy start <= pr < end, got "
                f"({self.start_frame}, {self.pr_frame}, {self.end_frame})"
            )


@dataclass
class ClipRecord:
    clip_id: str
    view: ViewLabel
    pacing: PacingClass
    frame_store: str
    frame_count: int
    beats: list[BeatAnnotation]


@dataclass
class PatientRecord:
    patient_id: str
    clips: list[ClipRecord]

    def beat_count(self) -> int:
        return sum(len(c.beats) for c in self.clips)


@dataclass
class DatasetManifest:
    patients: list[PatientRecord]
    # directory frame_store paths are relative to; not part of the manifest contents
    base_dir: Path | None = field(default=None, compare=False)

    @property
    def ordering(self) -> list[str]:
        return [p.patient_id for p in self.patients]

    def iter_clips(self):
        for p in self.patients:
            for c in p.clips:
                yield p, c

    def frame_dir(self, clip: ClipRecord) -> Path:
        store = Path(clip.frame_store)
        if not store.is_absolute() and self.base_dir is not None:
            store = self.base_dir / store
        return store


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ManifestParseError(f"missing field '{key}' in {where}")
    return obj[key]


def _parse_clip(obj: dict, where: str) -> ClipRecord:
    view_name = _require(obj, "view", where)
    pacing_name = _require(obj, "pacing", where)
    try:
        view = ViewLabel[view_name]
    except KeyError:
        raise ManifestParseError(f"unknown view '{view_name}' in {where}") from None
    try:
        pacing = PacingClass[pacing_name]
    except KeyError:
        raise ManifestParseError(f"unknown pacing '{pacing_name}' in {where}") from None
    beats = []
    for j, b in enumerate(_require(obj, "beats", where)):
        bwhere = f"{where}.beats[{j}]"
        beat = BeatAnnotation(
            start_frame=int(_require(b, "start_frame", bwhere)),
            pr_frame=int(_require(b, "pr_frame", bwhere)),
            end_frame=int(_require(b, "end_frame", bwhere)),
        )
        try:
            beat.check()
        except ValueError as e:
            raise ManifestParseError(f"{bwhere}: {e}") from None
        beats.append(beat)
    return ClipRecord(
        clip_id=str(_require(obj, "clip_id", where)),
        view=view,
        pacing=pacing,
        frame_store=str(_require(obj, "frame_store", where)),
        frame_count=int(_require(obj, "frame_count", where)),
        beats=beats,
    )


def parse_manifest(path) -> DatasetManifest:
    """Load and validate a manifest JSON file; frame stores are not touched."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestParseError(f"cannot read manifest {path}: {e}") from None
    patients = []
    seen_patients: set[str] = set()
    seen_clips: set[str] = set()
    for i, pobj in enumerate(_require(raw, "patients", "manifest root")):
        pwhere = f"patients[{i}]"
        pid = str(_require(pobj, "id", pwhere))
        if pid in seen_patients:
            raise ManifestParseError(f"duplicate patient id '{pid}'")
        seen_patients.add(pid)
        clips = []
        for k, cobj in enumerate(_require(pobj, "clips", pwhere)):
            clip = _parse_clip(cobj, f"{pwhere}.clips[{k}]")
            if clip.clip_id in seen_clips:
                raise ManifestParseError(f"duplicate clip id '{clip.clip_id}'")
            seen_clips.add(clip.clip_id)
            clips.append(clip)
        patients.append(PatientRecord(patient_id=pid, clips=clips))
    return DatasetManifest(patients=patients, base_dir=path.parent)


def manifest_to_dict(m: DatasetManifest) -> dict:
    return {
        "patients": [
            {
                "id": p.patient_id,
                "clips": [
                    {
                        "clip_id": c.clip_id,
                        "view": c.view.name,
                        "pacing": c.pacing.name,
                        "frame_store": c.frame_store,
                        "frame_count": c.frame_count,
                        "beats": [asdict(b) for b in c.beats],
                    }
                    for c in p.clips
                ],
            }
            for p in m.patients
        ]
    }


def serialize_manifest(m: DatasetManifest, path):
    path = Path(path)
    path.write_text(json.dumps(manifest_to_dict(m), indent=1, sort_keys=True) + "\n")


def validate_manifest(m: DatasetManifest) -> list[str]:
    """Return human-readable violations; empty list means the manifest is sound."""
    problems = []
    seen_p: set[str] = set()
    seen_c: set[str] = set()
    for p in m.patients:
        if p.patient_id in seen_p:
            problems.append(f"duplicate patient id '{p.patient_id}'")
        seen_p.add(p.patient_id)
        if p.beat_count() == 0:
            problems.append(f"patient '{p.patient_id}' has no beats")
        for c in p.clips:
            if c.clip_id in seen_c:
                problems.append(f"duplicate clip id '{c.clip_id}'")
            seen_c.add(c.clip_id)
            if c.frame_count < 1:
                problems.append(f"clip '{c.clip_id}' has frame_count {c.frame_count}")
            prev_end = 0
            for j, b in enumerate(c.beats):
                try:
                    b.check()
                except ValueError as e:
                    problems.append(f"clip '{c.clip_id}' beat {j}: {e}")
                    continue
                if b.start_frame < prev_end:
                    problems.append(f"clip '{c.clip_id}' beat {j} overlaps previous beat")
                if b.end_frame > c.frame_count:
                    problems.append(
                        f"clip '{c.clip_id}' beat {j} ends at {b.end_frame} "
                        f"beyond frame_count {c.frame_count}"
                    )
                prev_end = b.end_frame
            store = m.frame_dir(c)
            if not store.is_dir():
                problems.append(f"clip '{c.clip_id}' frame store missing: {store}")
            else:
                n = sum(1 for f in store.iterdir() if f.suffix == ".png")
                if n != c.frame_count:
                    problems.append(
                        f"clip '{c.clip_id}' frame store holds {n} frames, "
                        f"manifest says {c.frame_count}"
                    )
    return problems


def load_clip_raw(clip: ClipRecord, base_dir=None) -> np.ndarray:
    """Read a clip's frames as uint8 with shape (1, T, H, W)."""
    store = Path(clip.frame_store)
    if not store.is_absolute() and base_dir is not None:
        store = Path(base_dir) / store
    frames = []
    shape = None
    for t in range(clip.frame_count):
        fp = store / FRAME_NAME.format(t)
        try:
            with Image.open(fp) as im:
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
        except (OSError, ValueError) as e:
            raise FrameLoadError(f"clip '{clip.clip_id}': cannot read frame {t} ({fp}): {e}") from None
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise FrameLoadError(
                f"clip '{clip.clip_id}': frame {t} has shape {arr.shape}, expected {shape}"
            )
        frames.append(arr)
    return np.stack(frames)[None]


def load_clip(clip: ClipRecord, base_dir=None) -> np.ndarray:
    """Read a clip as a float32 video tensor (1, T, H, W) scaled to [0, 1]."""
    return load_clip_raw(clip, base_dir).astype(np.float32) / 255.0


# --------------------------------------------------------------------------
# synthetic corpus
# --------------------------------------------------------------------------

# orbit placement per view, as fractions of frame height: (angle from fan axis
# in degrees, radial distance from apex, orbit radius)
_VIEW_ORBITS = {
    ViewLabel.TV: (-14.0, 0.50, 0.11),
    ViewLabel.MV: (14.0, 0.50, 0.11),
    ViewLabel.LPV: (0.0, 0.36, 0.10),
    ViewLabel.CT: (0.0, 0.64, 0.09),
}

_CLASS_PHASE = {p: 2.0 * math.pi * p.value / 3.0 for p in PacingClass}


@dataclass
class SynthConfig:
    frame_size: tuple[int, int] = (708, 1016)
    beats_per_clip: tuple[int, int] = (8, 14)
    frames_per_beat: tuple[int, int] = (20, 45)
    fan_half_angle_deg: float = 38.0
    blob_sigma_frac: float = 0.05
    blob_amplitude: int = 190
    patient_phase_jitter: float = 0.07
    patient_center_jitter_frac: float = 0.02
    beat_phase_noise: float = 0.03

    @classmethod
    def small(cls, **kw) -> "SynthConfig":
        """Fast test-scale variant with 177x254 frames."""
        return cls(frame_size=(177, 254), **kw)


def fan_mask(frame_size: tuple[int, int], half_angle_deg: float) -> np.ndarray:
    """Binary ultrasound sector: apex near the top-centre, opening downward."""
    h, w = frame_size
    apex_r, apex_c = 0.02 * h, 0.5 * w
    rr, cc = np.mgrid[0:h, 0:w].astype(np.float32)
    dr, dc = rr - apex_r, cc - apex_c
    rad = np.hypot(dr, dc)
    ang = np.degrees(np.arctan2(dc, dr))  # 0 deg points straight down
    return (
        (rad >= 0.06 * h)
        & (rad <= 0.93 * h)
        & (np.abs(ang) <= half_angle_deg)
    )


def _rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def _patient_traits(seed: int, p_idx: int, cfg: SynthConfig):
    rng = _rng(seed, 1, p_idx)
    h = cfg.frame_size[0]
    return {
        "phase": rng.normal(0.0, cfg.patient_phase_jitter),
        "center_dr": rng.uniform(-1, 1) * cfg.patient_center_jitter_frac * h,
        "center_dc": rng.uniform(-1, 1) * cfg.patient_center_jitter_frac * h,
        "radius_scale": rng.uniform(0.9, 1.1),
    }


def _render_frame(bg_u8, fan, cy, cx, sigma, amplitude):
    """Static speckle plus one gaussian blob, masked to the fan. Returns uint8.

    bg_u8 must already be zero outside the fan; only the blob window is touched.
    """
    frame = bg_u8.copy()
    h, w = frame.shape
    r = int(3 * sigma) + 1
    r0, r1 = max(0, int(cy) - r), min(h, int(cy) + r + 1)
    c0, c1 = max(0, int(cx) - r), min(w, int(cx) + r + 1)
    if r0 < r1 and c0 < c1:
        yy, xx = np.mgrid[r0:r1, c0:c1].astype(np.float32)
        blob = amplitude * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        win = np.minimum(frame[r0:r1, c0:c1] + blob, 255.0).astype(np.uint8)
        win *= fan[r0:r1, c0:c1]
        frame[r0:r1, c0:c1] = win
    return frame


def generate_synthetic(n_patients: int, seed: int, cfg: SynthConfig, out_dir) -> DatasetManifest:
    """Write a deterministic synthetic corpus (frames + manifest.json) under out_dir.

    Every patient gets one clip per (view, pacing) pair.  The pacing class is
    encoded in the phase of a bright blob orbiting inside the fan: the blob
    reaches its class-specific orbit angle exactly at each beat's PR frame, so
    classes differ in activation timing rather than intensity.
    """
    if n_patients < 1:
        raise ValueError("n_patients must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h, w = cfg.frame_size
    apex_r, apex_c = 0.02 * h, 0.5 * w
    fan = fan_mask(cfg.frame_size, cfg.fan_half_angle_deg)
    sigma = cfg.blob_sigma_frac * h

    patients = []
    for p_idx in range(n_patients):
        pid = f"S{p_idx + 1:02d}"
        traits = _patient_traits(seed, p_idx, cfg)
        clips = []
        for view in ViewLabel:
            ang_deg, dist_frac, orbit_frac = _VIEW_ORBITS[view]
            ocy = apex_r + dist_frac * h * math.cos(math.radians(ang_deg)) + traits["center_dr"]
            ocx = apex_c + dist_frac * h * math.sin(math.radians(ang_deg)) + traits["center_dc"]
            orbit = orbit_frac * h * traits["radius_scale"]
            for pacing in PacingClass:
                clip_id = f"{pid}_{view.name}_{pacing.name}"
                rng = _rng(seed, 2, p_idx, view.value, pacing.value)
                n_beats = int(rng.integers(cfg.beats_per_clip[0], cfg.beats_per_clip[1] + 1))
                # coarse speckle: spatially correlated and cheap to deflate
                coarse = rng.uniform(15, 55, ((h + 3) // 4, (w + 3) // 4)).astype(np.float32)
                bg = np.repeat(np.repeat(coarse, 4, axis=0), 4, axis=1)[:h, :w]
                bg_u8 = (bg * fan).astype(np.uint8)
                store_rel = f"frames/{clip_id}"
                store = out_dir / store_rel
                store.mkdir(parents=True, exist_ok=True)
                beats = []
                t = 0
                frame_idx = 0
                for _ in range(n_beats):
                    length = int(rng.integers(cfg.frames_per_beat[0], cfg.frames_per_beat[1] + 1))
                    pr = t + int(rng.integers(2, 5))
                    phase0 = (
                        _CLASS_PHASE[pacing]
                        + traits["phase"]
                        + rng.normal(0.0, cfg.beat_phase_noise)
                    )
                    for k in range(length):
                        theta = phase0 + 2 * math.pi * (t + k - pr) / length
                        cy = ocy + orbit * math.sin(theta)
                        cx = ocx + orbit * math.cos(theta)
                        frame = _render_frame(bg_u8, fan, cy, cx, sigma, cfg.blob_amplitude)
                        Image.fromarray(frame, mode="L").save(
                            store / FRAME_NAME.format(frame_idx), compress_level=1
                        )
                        frame_idx += 1
                    beats.append(BeatAnnotation(start_frame=t, pr_frame=pr, end_frame=t + length))
                    t += length
                clips.append(
                    ClipRecord(
                        clip_id=clip_id,
                        view=view,
                        pacing=pacing,
                        frame_store=store_rel,
                        frame_count=t,
                        beats=beats,
                    )
                )
        patients.append(PatientRecord(patient_id=pid, clips=clips))

    manifest = DatasetManifest(patients=patients, base_dir=out_dir)
    serialize_manifest(manifest, out_dir / "manifest.json")
    return manifest
