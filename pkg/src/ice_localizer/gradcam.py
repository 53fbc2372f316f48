"""Volumetric Grad-CAM: channel weights from globally averaged gradients at the
deepest 3D convolution, rectified/normalized and upsampled to input resolution,
plus annotated side-by-side GIF export."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image, ImageDraw

HEADER_HEIGHT = 14
OVERLAY_ALPHA = 0.4


class GradCamError(Exception):
    pass


@dataclass
class OverlayMeta:
    patient_id: str
    clip_id: str
    true_label: str
    pred_label: str


def _find_target_conv(model: nn.Module) -> nn.Module:
    if hasattr(model, "deepest_conv"):
        return model.deepest_conv()
    last = None
    for m in model.modules():
        if isinstance(m, nn.Conv3d):
            last = m
    if last is None:
        raise GradCamError("model has no volumetric convolution to hook")
    return last


def compute_gradcam(
    model: nn.Module,
    sample: np.ndarray,
    target_class: int,
    target_layer: nn.Module | None = None,
) -> np.ndarray:
    """Heatmap (T, H, W) in [0, 1] aligned to the input sample (1, T, H, W)."""
    if model.training:
        raise GradCamError("model must be in evaluation mode")
    if sample.ndim != 4 or sample.shape[0] != 1:
        raise GradCamError(f"expected sample shape (1, T, H, W), got {sample.shape}")
    layer = target_layer if target_layer is not None else _find_target_conv(model)

    captured: dict[str, torch.Tensor] = {}

    def forward_hook(_module, _inputs, output):
        captured["acts"] = output
        output.register_hook(lambda g: captured.__setitem__("grads", g.detach()))

    handle = layer.register_forward_hook(forward_hook)
    try:
        x = torch.from_numpy(np.ascontiguousarray(sample, dtype=np.float32))[None]
        model.zero_grad(set_to_none=True)
        logits = model(x)
        logits[0, int(target_class)].backward()
    finally:
        handle.remove()
        model.zero_grad(set_to_none=True)
    if "acts" not in captured:
        raise GradCamError("target layer did not fire during the forward pass")
    acts = captured["acts"].detach()
    grads = captured.get("grads")
    if grads is None:
        grads = torch.zeros_like(acts)

    channel_weights = grads.mean(dim=(2, 3, 4), keepdim=True)
    cam = F.relu((channel_weights * acts).sum(dim=1, keepdim=True))
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    up = F.interpolate(cam, size=sample.shape[1:], mode="trilinear", align_corners=False)
    return np.clip(up[0, 0].numpy(), 0.0, 1.0).astype(np.float32)


# --------------------------------------------------------------------------
# overlay rendering / export
# --------------------------------------------------------------------------


def render_header(text: str, width: int, height: int = HEADER_HEIGHT) -> np.ndarray:
    """White-on-black annotation strip; pure function of (text, width, height)."""
    img = Image.new("RGB", (width, height), (0, 0, 0))
    ImageDraw.Draw(img).text((2, 1), text, fill=(255, 255, 255))
    return np.asarray(img, dtype=np.uint8)


def _colorize(heat_frame: np.ndarray) -> np.ndarray:
    bgr = cv2.applyColorMap((heat_frame * 255).astype(np.uint8), cv2.COLORMAP_TURBO)
    return bgr[:, :, ::-1]


def render_overlay_frames(
    sample: np.ndarray,
    heatmap: np.ndarray,
    meta: OverlayMeta,
    alpha: float = OVERLAY_ALPHA,
) -> list[np.ndarray]:
    """Two panels per frame (original | heatmap overlay) under an annotation bar."""
    if heatmap.shape != sample.shape[1:]:
        raise GradCamError(
            f"heatmap shape {heatmap.shape} does not match sample {sample.shape[1:]}"
        )
    t_n, h, w = heatmap.shape
    frames = []
    for t in range(t_n):
        gray = (sample[0, t] * 255).astype(np.uint8)
        gray_rgb = np.repeat(gray[:, :, None], 3, axis=2).astype(np.float32)
        heat = heatmap[t]
        a = (alpha * heat)[:, :, None]
        overlay = gray_rgb * (1.0 - a) + _colorize(heat).astype(np.float32) * a
        panels = np.concatenate([gray_rgb, overlay], axis=1)
        header = render_header(
            f"{meta.patient_id} {meta.clip_id} true={meta.true_label} "
            f"pred={meta.pred_label} frame={t}",
            panels.shape[1],
        )
        frames.append(
            np.concatenate([header, np.clip(panels, 0, 255).astype(np.uint8)], axis=0)
        )
    return frames


def export_overlay(
    sample: np.ndarray,
    heatmap: np.ndarray,
    meta: OverlayMeta,
    path,
    alpha: float = OVERLAY_ALPHA,
    frame_ms: int = 80,
):
    """Write the annotated side-by-side animation as a GIF."""
    frames = render_overlay_frames(sample, heatmap, meta, alpha)
    images = [Image.fromarray(f) for f in frames]
    images[0].save(
        path,
        save_all=True,
        append_images=images[1:],
        duration=frame_ms,
        loop=0,
    )
    return path
