"""Clip conditioning: fan-mask isolation, normalization, beat segmentation,
spatial crop/resize, and temporal standardization to a fixed frame count."""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from .corpus import BeatAnnotation

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


class PreprocessError(Exception):
    pass


@dataclass
class PreprocessConfig:
    target_frames: int = 32
    crop_size: tuple[int, int] = (553, 756)
    # explicit (row0, col0) window origin; None derives it from the mask bbox
    crop_origin: tuple[int, int] | None = None
    resize_factor: float = 0.25
    mask_variance_threshold: float = 0.0

    def check(self):
        if self.target_frames < 1:
            raise PreprocessError("target_frames must be >= 1")
        if not (0.0 < self.resize_factor <= 1.0):
            raise PreprocessError("resize_factor must lie in (0, 1]")
        if self.mask_variance_threshold < 0:
            raise PreprocessError("mask_variance_threshold must be >= 0")


if _HAVE_NUMBA:

    @njit(cache=True)
    def _moments_loop(frames):
        t_n, h, w = frames.shape
        s = np.zeros((h, w), np.float32)
        s2 = np.zeros((h, w), np.float32)
        for t in range(t_n):
            f = frames[t]
            for i in range(h):
                for j in range(w):
                    v = np.float32(f[i, j])
                    s[i, j] += v
                    s2[i, j] += v * v
        return s, s2


def temporal_moments(frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel temporal mean and variance on the [0, 1] intensity scale.

    Accepts uint8 (0..255) or float (already normalized) frame stacks (T, H, W);
    single pass, no float copy of the whole clip.
    """
    scale = 1.0 / 255.0 if frames.dtype == np.uint8 else 1.0
    t_n = frames.shape[0]
    if _HAVE_NUMBA:
        s, s2 = _moments_loop(frames)
    else:
        s = frames.sum(axis=0, dtype=np.float32)
        s2 = np.zeros(frames.shape[1:], np.float32)
        buf = np.empty((16,) + frames.shape[1:], np.float32)
        for t0 in range(0, t_n, 16):
            chunk = frames[t0 : t0 + 16]
            np.multiply(chunk, chunk, out=buf[: len(chunk)])
            s2 += buf[: len(chunk)].sum(axis=0, dtype=np.float32)
    mean = s * (scale / t_n)
    var = np.maximum(s2 * (scale * scale / t_n) - mean * mean, 0.0)
    return mean, var


def compute_mask(clip: np.ndarray, variance_threshold: float = 0.0) -> np.ndarray:
    """Fan mask: pixels with temporal variance above threshold or nonzero mean
    intensity, restricted to the largest connected region."""
    frames = clip[0]
    if frames.shape[0] < 2:
        raise PreprocessError("mask needs >= 2 frames: temporal variance is undefined")
    mean, var = temporal_moments(frames)
    candidate = (var > variance_threshold) | (mean > 0)
    return _largest_component(candidate)


def intensity_mask(clip: np.ndarray) -> np.ndarray:
    """Mean-intensity-only fallback, defined for any frame count (incl. one)."""
    mean, _ = temporal_moments(clip[0])
    return _largest_component(mean > 0)


def _largest_component(candidate: np.ndarray) -> np.ndarray:
    if not candidate.any():
        return np.zeros_like(candidate, dtype=bool)
    labels, n = ndimage.label(candidate, structure=np.ones((3, 3), dtype=int))
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def normalize(clip: np.ndarray) -> np.ndarray:
    """Map raw 8-bit intensities (0..255) to float32 in [0, 1]."""
    arr = np.asarray(clip)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise PreprocessError("normalize expects values in [0, 255]")
    return arr.astype(np.float32) / 255.0


def segment_heartbeats(clip: np.ndarray, beats: list[BeatAnnotation]) -> list[np.ndarray]:
    """Cut one sub-clip per annotated beat, frames [start_frame, end_frame)."""
    t_n = clip.shape[1]
    out = []
    for j, b in enumerate(beats):
        b.check()
        if b.end_frame > t_n:
            raise PreprocessError(
                f"beat {j} spans [{b.start_frame}, {b.end_frame}) beyond clip length {t_n}"
            )
        out.append(clip[:, b.start_frame : b.end_frame])
    return out


def crop(clip: np.ndarray, rect: tuple[int, int, int, int]) -> np.ndarray:
    """Pure spatial windowing: rect = (row0, col0, rows, cols)."""
    row0, col0, rows, cols = rect
    _, _, h, w = clip.shape
    if row0 < 0 or col0 < 0 or rows < 1 or cols < 1 or row0 + rows > h or col0 + cols > w:
        raise PreprocessError(f"crop rect {rect} out of bounds for frame {h}x{w}")
    return clip[:, :, row0 : row0 + rows, col0 : col0 + cols]


def derive_crop_rect(mask: np.ndarray, crop_size: tuple[int, int]) -> tuple[int, int, int, int]:
    """Window of crop_size centred on the mask bounding box, shifted inside bounds."""
    rows, cols = crop_size
    h, w = mask.shape
    if rows > h or cols > w:
        raise PreprocessError(f"crop size {crop_size} exceeds frame {h}x{w}")
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        cy, cx = h / 2, w / 2
    else:
        cy = (ys.min() + ys.max() + 1) / 2
        cx = (xs.min() + xs.max() + 1) / 2
    row0 = min(max(int(round(cy - rows / 2)), 0), h - rows)
    col0 = min(max(int(round(cx - cols / 2)), 0), w - cols)
    return (row0, col0, rows, cols)


def resize(clip: np.ndarray, factor: float) -> np.ndarray:
    """Per-frame bilinear downsampling; output dims floor(dim * factor), min 1."""
    if not (0.0 < factor <= 1.0):
        raise PreprocessError("resize factor must lie in (0, 1]")
    if factor == 1.0:
        return clip
    _, t_n, h, w = clip.shape
    h2 = max(int(math.floor(h * factor + 1e-7)), 1)
    w2 = max(int(math.floor(w * factor + 1e-7)), 1)
    out = np.empty((1, t_n, h2, w2), np.float32)
    for t in range(t_n):
        out[0, t] = cv2.resize(
            np.ascontiguousarray(clip[0, t], dtype=np.float32),
            (w2, h2),
            interpolation=cv2.INTER_LINEAR,
        )
    np.clip(out, 0.0, 1.0, out=out)
    return out


def standardize_temporal(clip: np.ndarray, target_frames: int = 32) -> np.ndarray:
    """Fix the frame count: truncate the tail, or pad by repeating the last frame."""
    t_n = clip.shape[1]
    if t_n == target_frames:
        return clip
    if t_n > target_frames:
        return clip[:, :target_frames]
    pad = np.repeat(clip[:, -1:], target_frames - t_n, axis=1)
    return np.concatenate([clip, pad], axis=1)


def preprocess_pipeline(
    clip: np.ndarray, beats: list[BeatAnnotation], cfg: PreprocessConfig
) -> list[np.ndarray]:
    """Full conditioning chain: mask, normalize, segment, crop, resize, standardize.

    Accepts uint8 frames or an already-normalized float tensor, shape (1, T, H, W).
    Stages are fused for speed where they commute exactly (masking, scaling and
    frame selection are pointwise/index operations, so the fused result is
    bit-identical to the declared stage order).
    """
    cfg.check()
    if clip.ndim != 4 or clip.shape[0] != 1:
        raise PreprocessError(f"expected clip shape (1, T, H, W), got {clip.shape}")
    t_n = clip.shape[1]
    if t_n >= 2:
        mask = compute_mask(clip, cfg.mask_variance_threshold)
    else:
        mask = intensity_mask(clip)
    if cfg.crop_origin is not None:
        rect = (cfg.crop_origin[0], cfg.crop_origin[1], *cfg.crop_size)
    else:
        rect = derive_crop_rect(mask, cfg.crop_size)
    row0, col0, rows, cols = rect
    if row0 < 0 or col0 < 0 or row0 + rows > clip.shape[2] or col0 + cols > clip.shape[3]:
        raise PreprocessError(f"crop rect {rect} out of bounds for frame {clip.shape[2:]}")
    mask_win = mask[row0 : row0 + rows, col0 : col0 + cols].astype(np.float32)
    is_raw = clip.dtype.kind in "ui"

    out = []
    for sub in segment_heartbeats(clip, beats):
        win = sub[:, :, row0 : row0 + rows, col0 : col0 + cols]
        win = standardize_temporal(win, cfg.target_frames)
        arr = win.astype(np.float32)
        if is_raw:
            arr /= 255.0  # same rounding as normalize()
        arr *= mask_win
        out.append(resize(arr, cfg.resize_factor))
    return out
