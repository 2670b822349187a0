"""Per-class dice evaluation and report assembly.

Dice is micro-aggregated: intersection and mask sizes are pooled over the
whole evaluated set before dividing, which avoids per-image instability when
a class is absent. When both masks are empty the dice is defined as 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics_format import CSV_HEADER, csv_row, markdown_table  # noqa: F401
from .phantom import NUM_CLASSES, PhantomSample
from .tensor import Tensor, no_grad, softmax_channels
from . import model as unet


@dataclass(frozen=True)
class MetricsReport:
    dice: tuple            # 9 per-class values in class-code order
    mean_dice: float       # over all 9 classes
    mean_foreground_dice: float  # over classes 1..8
    pixel_accuracy: float
    n_samples: int


def _class_counts(pred: np.ndarray, gt: np.ndarray, k: int):
    p = pred == k
    g = gt == k
    return int((p & g).sum()), int(p.sum()), int(g.sum())


def _dice_from_counts(inter: int, p_size: int, g_size: int) -> float:
    if p_size + g_size == 0:
        return 1.0
    return 2.0 * inter / (p_size + g_size)


def dice_per_class(pred: np.ndarray, gt: np.ndarray, k: int) -> float:
    """2 |pred_k & gt_k| / (|pred_k| + |gt_k|); 1.0 when both are empty."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if not 0 <= k < NUM_CLASSES:
        raise ValueError(f"class {k} out of range [0, {NUM_CLASSES})")
    return _dice_from_counts(*_class_counts(pred, gt, k))


def report_from_maps(pred: np.ndarray, gt: np.ndarray,
                     n_samples: int) -> MetricsReport:
    inter = np.zeros(NUM_CLASSES, dtype=np.int64)
    p_size = np.zeros(NUM_CLASSES, dtype=np.int64)
    g_size = np.zeros(NUM_CLASSES, dtype=np.int64)
    for k in range(NUM_CLASSES):
        inter[k], p_size[k], g_size[k] = _class_counts(pred, gt, k)
    dice = tuple(_dice_from_counts(inter[k], p_size[k], g_size[k])
                 for k in range(NUM_CLASSES))
    return MetricsReport(
        dice=dice,
        mean_dice=float(np.mean(dice)),
        mean_foreground_dice=float(np.mean(dice[1:])),
        pixel_accuracy=float((pred == gt).mean()),
        n_samples=n_samples,
    )


def predict_labels(params: unet.ModelParams, images: np.ndarray,
                   batch_size: int = 8) -> np.ndarray:
    """Argmax class maps for a stack of (H, W) images, without building a graph."""
    dtype = next(iter(params.tensors.values())).dtype
    preds = []
    with no_grad():
        for lo in range(0, len(images), batch_size):
            chunk = np.asarray(images[lo:lo + batch_size], dtype=dtype)[:, None]
            prob = softmax_channels(unet.forward(params, Tensor(chunk)))
            preds.append(prob.data.argmax(axis=1))
    return np.concatenate(preds, axis=0)


def evaluate(params: unet.ModelParams, samples: list[PhantomSample],
             batch_size: int = 8) -> MetricsReport:
    """Micro-aggregated per-class dice of the model over a labeled sample set."""
    if not samples:
        raise ValueError("cannot evaluate on an empty sample set")
    images = np.stack([s.image for s in samples])
    gt = np.stack([s.labels for s in samples]).astype(np.int64)
    pred = predict_labels(params, images, batch_size=batch_size)
    return report_from_maps(pred, gt, n_samples=len(samples))
