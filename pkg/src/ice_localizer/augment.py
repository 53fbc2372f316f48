"""Training-set-only augmentation: brightness/contrast jitter, random frame
dropping, and additive white gaussian noise, with per-sample derived RNG
streams so variant content never depends on iteration order."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .preprocess import standardize_temporal

# test/audit hook: called with the sample_key on every make_variants invocation
_audit_hook: Callable[[str], None] | None = None


def set_audit_hook(hook: Callable[[str], None] | None):
    global _audit_hook
    _audit_hook = hook


@dataclass
class AugmentConfig:
    variants_per_sample: int = 3
    brightness_range: tuple[float, float] = (0.7, 1.3)
    contrast_range: tuple[float, float] = (0.5, 1.5)
    frame_drop_prob: float = 0.1
    noise_sigma: float = 0.02
    seed: int = 0

    def check(self):
        if self.variants_per_sample < 0:
            raise ValueError("variants_per_sample must be >= 0")
        if self.brightness_range[0] > self.brightness_range[1]:
            raise ValueError("brightness_range must be ordered")
        if self.contrast_range[0] > self.contrast_range[1]:
            raise ValueError("contrast_range must be ordered")
        if not (0.0 <= self.frame_drop_prob <= 1.0):
            raise ValueError("frame_drop_prob must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def _variant_rng(seed: int, sample_key: str, index: int) -> np.random.Generator:
    # stable across processes: never rely on the builtin hash()
    digest = hashlib.sha256(f"{seed}:{sample_key}:{index}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def brightness_contrast_jitter(x: np.ndarray, b: float, c: float) -> np.ndarray:
    """x' = clip((x*b - mu)*c + mu, 0, 1) with mu = mean(x*b) over the whole clip.

    Internally double precision so identity parameters and constant clips come
    out exact at float32 resolution; c == 1 skips the mu round-trip (same math).
    """
    xb = x.astype(np.float64) * b
    if c != 1.0:
        mu = xb.mean()
        xb = (xb - mu) * c + mu
    return np.clip(xb, 0.0, 1.0).astype(np.float32)


def drop_frames(x: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Drop each frame independently with probability p (always keep at least
    one), then re-standardize to the original frame count."""
    t_n = x.shape[1]
    keep = rng.random(t_n) >= p
    if not keep.any():
        keep[0] = True
    return standardize_temporal(x[:, keep], t_n)


def add_gaussian_noise(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0:
        return x
    noise = rng.normal(0.0, sigma, x.shape).astype(np.float32)
    return np.clip(x + noise, 0.0, 1.0)


def make_variants(x: np.ndarray, cfg: AugmentConfig, sample_key: str) -> list[np.ndarray]:
    """Up to A augmented variants of one standardized sample; content is a pure
    function of (cfg.seed, sample_key, variant index)."""
    cfg.check()
    if _audit_hook is not None:
        _audit_hook(sample_key)
    out = []
    for k in range(cfg.variants_per_sample):
        rng = _variant_rng(cfg.seed, sample_key, k)
        b = rng.uniform(*cfg.brightness_range)
        c = rng.uniform(*cfg.contrast_range)
        v = brightness_contrast_jitter(x, b, c)
        v = drop_frames(v, cfg.frame_drop_prob, rng)
        v = add_gaussian_noise(v, cfg.noise_sigma, rng)
        out.append(v)
    return out
