"""3-class video classifier: single-channel volumetric adapter stem in front of
an 18-layer 3D residual backbone, with a reduced-width variant for CPU runs."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import torch
import torch.nn as nn


class ModelError(Exception):
    pass


class CheckpointError(Exception):
    pass


@dataclass
class ModelConfig:
    n_classes: int = 3
    adapter_out_channels: int = 64
    adapter_kernel: tuple[int, int, int] = (9, 7, 7)
    adapter_stride: tuple[int, int, int] = (1, 3, 3)
    adapter_padding: tuple[int, int, int] = (1, 3, 3)
    adapter_dropout: float = 0.1
    head_dropout: float = 0.2
    backbone: str = "r3d18"  # "r3d18" or "reduced" (stage widths scaled by 1/4)
    pretrained_weights_path: str | None = None

    def stage_widths(self) -> list[int]:
        if self.backbone == "r3d18":
            base = self.adapter_out_channels
        elif self.backbone == "reduced":
            base = max(self.adapter_out_channels // 4, 1)
        else:
            raise ModelError(f"unknown backbone variant '{self.backbone}'")
        return [base, base * 2, base * 4, base * 8]

    def stem_out_channels(self) -> int:
        return self.stage_widths()[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("adapter_kernel", "adapter_stride", "adapter_padding"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for k in ("adapter_kernel", "adapter_stride", "adapter_padding"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


class ResidualBlock3d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv3d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(out_ch)
        self.conv2 = nn.Conv3d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = None
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv3d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm3d(out_ch),
            )

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


def _stage(in_ch: int, out_ch: int, stride: int) -> nn.Sequential:
    return nn.Sequential(ResidualBlock3d(in_ch, out_ch, stride), ResidualBlock3d(out_ch, out_ch))


class ActivationSourceNet(nn.Module):
    """Adapter stem -> four residual stages -> pooled dropout head with 3 logits."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.stage_widths()
        self.adapter = nn.Sequential(
            nn.Conv3d(
                1,
                widths[0],
                cfg.adapter_kernel,
                stride=cfg.adapter_stride,
                padding=cfg.adapter_padding,
                bias=False,
            ),
            nn.BatchNorm3d(widths[0]),
            nn.Dropout3d(cfg.adapter_dropout),
        )
        self.layer1 = _stage(widths[0], widths[0], 1)
        self.layer2 = _stage(widths[0], widths[1], 2)
        self.layer3 = _stage(widths[1], widths[2], 2)
        self.layer4 = _stage(widths[2], widths[3], 2)
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.head_dropout = nn.Dropout(cfg.head_dropout)
        self.fc = nn.Linear(widths[3], cfg.n_classes)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv3d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(m, nn.BatchNorm3d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
            elif isinstance(m, nn.Linear):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="linear")
                nn.init.zeros_(m.bias)

    def check_input_shape(self, shape):
        if len(shape) != 5 or shape[1] != 1:
            raise ModelError(f"expected batch shape (B, 1, T, H, W), got {tuple(shape)}")
        dims = self.expected_adapter_output(shape[2:])
        if min(dims) < 1:
            raise ModelError(
                f"input {tuple(shape[2:])} collapses to {dims} after the adapter stem"
            )

    def expected_adapter_output(self, thw) -> tuple[int, int, int]:
        dims = []
        for n, k, s, p in zip(
            thw, self.cfg.adapter_kernel, self.cfg.adapter_stride, self.cfg.adapter_padding
        ):
            dims.append((n + 2 * p - k) // s + 1)
        return tuple(dims)

    def features(self, x):
        x = self.adapter(x)
        x = self.layer1(x)
        x = self.layer2(x)
        x = self.layer3(x)
        return self.layer4(x)

    def forward(self, x):
        self.check_input_shape(x.shape)
        x = self.features(x)
        x = self.pool(x).flatten(1)
        return self.fc(self.head_dropout(x))

    def deepest_conv(self) -> nn.Conv3d:
        """Last volumetric convolution in forward order (largest receptive field)."""
        last = None
        for m in (*self.layer1, *self.layer2, *self.layer3, *self.layer4):
            for sub in m.modules():
                if isinstance(sub, nn.Conv3d):
                    last = sub
        if last is None:
            raise ModelError("model has no volumetric convolution to hook")
        return last


def build_model(cfg: ModelConfig) -> ActivationSourceNet:
    model = ActivationSourceNet(cfg)
    if cfg.pretrained_weights_path:
        _load_backbone_weights(model, cfg.pretrained_weights_path)
    return model


def _load_backbone_weights(model: ActivationSourceNet, path):
    """Load backbone-stage weights from file; adapter and head stay fresh."""
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"cannot read weight file {path}: {e}") from None
    own = model.state_dict()
    stage_keys = [k for k in own if k.startswith("layer")]
    mismatched = [
        k for k in stage_keys if k not in state or state[k].shape != own[k].shape
    ]
    if mismatched:
        raise ModelError(
            "weight file incompatible with backbone, mismatched layers: "
            + ", ".join(sorted(mismatched))
        )
    model.load_state_dict({k: state[k] for k in stage_keys}, strict=False)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def save_checkpoint(model: ActivationSourceNet, meta: dict, path):
    """Single-file container: named parameter tensors plus JSON metadata."""
    payload = {
        "params": model.state_dict(),
        "meta_json": json.dumps(
            {
                "config": model.cfg.to_dict(),
                **meta,
            },
            sort_keys=True,
        ),
        "torch_rng": torch.get_rng_state(),
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_config: ModelConfig | None = None):
    """Rebuild the model from a checkpoint file; returns (model, meta dict)."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
        meta = json.loads(payload["meta_json"])
        cfg = ModelConfig.from_dict(meta.pop("config"))
    except Exception as e:
        raise CheckpointError(f"corrupt or unreadable checkpoint {path}: {e}") from None
    if expected_config is not None and cfg != expected_config:
        raise CheckpointError("checkpoint model config does not match the expected config")
    # parameters come from the file; the pretrained hook must not re-fire
    cfg.pretrained_weights_path = None
    model = ActivationSourceNet(cfg)
    model.load_state_dict(payload["params"])
    model.eval()
    return model, meta
