"""Compact encoder-decoder segmentation network producing per-pixel logits.

Default architecture (base_channels=8, depth=2): two encoder levels with two
3x3 convs each (8, 16 channels), a 32-channel bottleneck, a mirrored decoder
with nearest-neighbor upsampling and skip concatenation, and a final 1x1 conv
to the class logits. No normalization layers.

Parameter count: each 3x3 conv contributes ``outC * inC * 9 + outC`` scalars
and the 1x1 head ``numClasses * base + numClasses``; :func:`param_count`
evaluates this sum from the config alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .seeding import stream
from .tensor import Tensor, concat_channels, conv2d, downsample2, relu, upsample2


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 1
    base_channels: int = 8
    depth: int = 2
    num_classes: int = 9

    def __post_init__(self):
        for field in ("in_channels", "base_channels", "depth", "num_classes"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")


@dataclass
class ModelParams:
    config: UNetConfig
    tensors: dict  # name -> Tensor, in deterministic layer order

    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())


def layer_plan(cfg: UNetConfig) -> list[tuple[str, int, int, int]]:
    """(name, out_channels, in_channels, kernel) for every conv, in order."""
    plan = []
    prev = cfg.in_channels
    for i in range(cfg.depth):
        ch = cfg.base_channels * (1 << i)
        plan.append((f"enc{i}a", ch, prev, 3))
        plan.append((f"enc{i}b", ch, ch, 3))
        prev = ch
    mid = cfg.base_channels * (1 << cfg.depth)
    plan.append(("bota", mid, prev, 3))
    plan.append(("botb", mid, mid, 3))
    for i in reversed(range(cfg.depth)):
        ch = cfg.base_channels * (1 << i)
        above = cfg.base_channels * (1 << (i + 1))
        plan.append((f"dec{i}a", ch, above + ch, 3))
        plan.append((f"dec{i}b", ch, ch, 3))
    plan.append(("head", cfg.num_classes, cfg.base_channels, 1))
    return plan


def param_count(cfg: UNetConfig) -> int:
    return sum(o * i * k * k + o for _, o, i, k in layer_plan(cfg))


def init(cfg: UNetConfig, seed: int, dtype=np.float32) -> ModelParams:
    """He-initialized weights (Normal(0, 2/fan_in)), zero biases."""
    rng = stream(seed, "init")
    tensors = {}
    for name, out_c, in_c, k in layer_plan(cfg):
        std = np.sqrt(2.0 / (in_c * k * k))
        w = rng.normal(0.0, std, size=(out_c, in_c, k, k)).astype(dtype)
        tensors[f"{name}.w"] = Tensor(w, track_grad=True, name=f"{name}.w")
        b = np.zeros((1, out_c, 1, 1), dtype=dtype)
        tensors[f"{name}.b"] = Tensor(b, track_grad=True, name=f"{name}.b")
    return ModelParams(config=cfg, tensors=tensors)


def _conv_relu(params: ModelParams, name: str, x: Tensor) -> Tensor:
    return relu(conv2d(x, params.tensors[f"{name}.w"], params.tensors[f"{name}.b"]))


def forward(params: ModelParams, batch: Tensor) -> Tensor:
    """Logits (B, num_classes, H, W) for an input batch (B, in_channels, H, W)."""
    cfg = params.config
    H, W = batch.shape[2], batch.shape[3]
    div = 1 << cfg.depth
    if H % div or W % div:
        raise ShapeError(
            f"spatial extents {H}x{W} must be divisible by 2^depth = {div}")
    if batch.shape[1] != cfg.in_channels:
        raise ShapeError(
            f"batch has {batch.shape[1]} channels, expected {cfg.in_channels}")

    skips = []
    h = batch
    for i in range(cfg.depth):
        h = _conv_relu(params, f"enc{i}a", h)
        h = _conv_relu(params, f"enc{i}b", h)
        skips.append(h)
        h = downsample2(h)
    h = _conv_relu(params, "bota", h)
    h = _conv_relu(params, "botb", h)
    for i in reversed(range(cfg.depth)):
        h = upsample2(h)
        h = concat_channels(h, skips[i])
        h = _conv_relu(params, f"dec{i}a", h)
        h = _conv_relu(params, f"dec{i}b", h)
    return conv2d(h, params.tensors["head.w"], params.tensors["head.b"])
