"""Intensity-only augmentations: Gaussian pixel noise and spectral style mixing.

Neither op moves pixels, so label maps stay aligned by construction. The weak
view perturbs a random subset of pixels with Gaussian noise; the strong view
blends the low-frequency Fourier amplitude of a style image into the content
image while keeping the content phase, which transfers coarse intensity
"style" (contrast, shading) without touching structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class WeakAugConfig:
    sigma: float = 0.05
    pixel_prob: float = 0.5

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.pixel_prob <= 1.0:
            raise ValueError(f"pixel_prob must be in [0, 1], got {self.pixel_prob}")


@dataclass(frozen=True)
class StrongAugConfig:
    lam: float = 0.5
    radius: int | None = None  # None -> floor(min(H, W) / 8) at call time

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.radius is not None and self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")


def weak_gaussian(image: np.ndarray, cfg: WeakAugConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma^2) noise to each pixel with probability pixel_prob."""
    image = np.asarray(image)
    mask = rng.random(image.shape) < cfg.pixel_prob
    noise = rng.normal(0.0, cfg.sigma, image.shape)
    out = np.clip(image + np.where(mask, noise, 0.0), 0.0, 1.0)
    return out.astype(image.dtype)


def strong_style(content: np.ndarray, style: np.ndarray,
                 cfg: StrongAugConfig) -> np.ndarray:
    """Blend the style image's low-frequency amplitude into the content image.

    Inside the centered square of half-width ``radius`` of the shifted
    spectrum, the content amplitude A_c becomes (1 - lam) * A_c + lam * A_s;
    the content phase is kept everywhere, and the result is the real part of
    the inverse transform, clamped to [0, 1].
    """
    content = np.asarray(content)
    style = np.asarray(style)
    if content.shape != style.shape:
        raise ShapeError(
            f"content/style extents differ: {content.shape} vs {style.shape}")
    H, W = content.shape
    radius = cfg.radius if cfg.radius is not None else min(H, W) // 8

    fc = np.fft.fft2(content)
    fs = np.fft.fft2(style)
    amp = np.fft.fftshift(np.abs(fc))
    amp_style = np.fft.fftshift(np.abs(fs))

    cy, cx = H // 2, W // 2
    y1, y2 = max(cy - radius, 0), min(cy + radius + 1, H)
    x1, x2 = max(cx - radius, 0), min(cx + radius + 1, W)
    amp[y1:y2, x1:x2] = ((1.0 - cfg.lam) * amp[y1:y2, x1:x2]
                         + cfg.lam * amp_style[y1:y2, x1:x2])

    mixed = np.fft.ifftshift(amp) * np.exp(1j * np.angle(fc))
    out = np.clip(np.real(np.fft.ifft2(mixed)), 0.0, 1.0)
    return out.astype(content.dtype)


def apply_views(x_unlabeled: np.ndarray, weak_cfg: WeakAugConfig,
                strong_cfg: StrongAugConfig, style_pool: np.ndarray,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Weak and strong views of an unlabeled batch (strong stacks on weak).

    ``x_unlabeled`` is (B, H, W); each image gets its own child generator, so
    results do not depend on processing order. Styles are drawn uniformly
    from ``style_pool``.
    """
    x_unlabeled = np.asarray(x_unlabeled)
    style_pool = np.asarray(style_pool)
    if len(style_pool) == 0:
        raise ValueError("style_pool is empty")
    x_w = np.empty_like(x_unlabeled)
    x_s = np.empty_like(x_unlabeled)
    children = rng.spawn(len(x_unlabeled))
    for i, child in enumerate(children):
        x_w[i] = weak_gaussian(x_unlabeled[i], weak_cfg, child)
        style = style_pool[child.integers(len(style_pool))]
        x_s[i] = strong_style(x_w[i], style, strong_cfg)
    return x_w, x_s
