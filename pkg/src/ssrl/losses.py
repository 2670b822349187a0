"""Segmentation losses over per-pixel probability maps.

All losses take a probability map (B, K, H, W) — typically the output of
``softmax_channels`` — average over every pixel of the batch, and carry
hand-derived analytic gradients w.r.t. the probabilities, so they chain
through the softmax back to the logits.

``beta_ce`` is the robust member of the family: its per-pixel value is

    ((b + 1) / b) * (1 - p_y^b) + sum_k p_k^(b+1) - 1

where ``p_y`` is the probability of the target class and ``b > 0`` the
robustness exponent. The trailing ``-1`` normalizes the minimum to 0 at a
perfect one-hot prediction and does not affect gradients. As ``b -> 0`` the
loss recovers plain cross-entropy; for ``b >= 1`` the gradient w.r.t. ``p_y``
stays bounded as ``p_y -> 0`` (where the cross-entropy gradient diverges like
``1/p``), which is what makes it tolerant of wrong targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, _record, add, scale

PROB_FLOOR = 1e-12  # clamp before log / negative powers

LOSS_KINDS = ("ce", "beta_ce", "thresholded_ce", "consistency_l2")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "ce"
    beta: float = 0.5
    tau: float = 0.95

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")


def _check_prob_labels(prob: Tensor, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    B, K, H, W = prob.shape
    if labels.shape != (B, H, W):
        raise ShapeError(
            f"labels shape {labels.shape} does not match prob map {(B, H, W)}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ShapeError(f"labels must be integers, got {labels.dtype}")
    if labels.min() < 0 or labels.max() >= K:
        raise ValueError(
            f"label values must lie in [0, {K}); got range "
            f"[{labels.min()}, {labels.max()}]")
    return labels


def _gather_true_class(p: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.take_along_axis(p, labels[:, None].astype(np.intp), axis=1)[:, 0]


def ce_loss(prob: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over all pixels of -log p(true class)."""
    labels = _check_prob_labels(prob, labels)
    p = prob.data
    B, K, H, W = prob.shape
    n = B * H * W
    py = _gather_true_class(p, labels)
    pyc = np.maximum(py, PROB_FLOOR)
    value = -np.log(pyc).sum() / n

    def grad_fn(g):
        gv = float(g.reshape(-1)[0]) / n
        gp = np.zeros_like(p)
        contrib = (-gv / pyc) * (py >= PROB_FLOOR)
        np.put_along_axis(gp, labels[:, None].astype(np.intp), contrib[:, None], axis=1)
        return ((prob, gp),)

    return _record(np.full((1, 1, 1, 1), value, dtype=p.dtype), (prob,), grad_fn)


def beta_ce(prob: Tensor, labels: np.ndarray, beta: float) -> Tensor:
    """Robust cross-entropy with exponent ``beta``; see the module docstring."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    labels = _check_prob_labels(prob, labels)
    p = prob.data
    B, K, H, W = prob.shape
    n = B * H * W
    py = _gather_true_class(p, labels)
    pyc = np.maximum(py, PROB_FLOOR)
    # (b+1)/b * (1 - p^b) written through expm1 for accuracy at tiny beta
    term_true = -((beta + 1.0) / beta) * np.expm1(beta * np.log(pyc))
    term_all = np.power(p, beta + 1.0).sum(axis=1)
    value = (term_true + term_all).sum() / n - 1.0

    def grad_fn(g):
        gv = float(g.reshape(-1)[0]) / n
        gp = (beta + 1.0) * np.power(p, beta) * gv
        extra = -(beta + 1.0) * np.power(pyc, beta - 1.0) * (py >= PROB_FLOOR) * gv
        at_true = _gather_true_class(gp, labels) + extra
        np.put_along_axis(gp, labels[:, None].astype(np.intp), at_true[:, None], axis=1)
        return ((prob, gp),)

    return _record(np.full((1, 1, 1, 1), value, dtype=p.dtype), (prob,), grad_fn)


def pseudo_label(prob_weak) -> tuple[np.ndarray, np.ndarray]:
    """Argmax class and max probability per pixel, detached from the graph.

    Ties break toward the lowest class index. The returned arrays are plain
    ndarrays, so no gradient ever flows back into the weak-view prediction.
    """
    p = prob_weak.data if isinstance(prob_weak, Tensor) else np.asarray(prob_weak)
    labels = p.argmax(axis=1)
    confidence = p.max(axis=1)
    return labels, confidence


def thresholded_ce(prob_strong: Tensor, pseudo: np.ndarray,
                   confidence: np.ndarray, tau: float) -> Tensor:
    """Cross-entropy restricted to pixels whose confidence exceeds ``tau``.

    The denominator stays the full pixel count, so dropping pixels can only
    shrink the loss; with no pixel over the threshold the loss is exactly 0.
    """
    pseudo = _check_prob_labels(prob_strong, pseudo)
    confidence = np.asarray(confidence)
    B, K, H, W = prob_strong.shape
    if confidence.shape != (B, H, W):
        raise ShapeError(
            f"confidence shape {confidence.shape} does not match {(B, H, W)}")
    p = prob_strong.data
    n = B * H * W
    mask = confidence > tau
    py = _gather_true_class(p, pseudo)
    pyc = np.maximum(py, PROB_FLOOR)
    value = (mask * -np.log(pyc)).sum() / n

    def grad_fn(g):
        gv = float(g.reshape(-1)[0]) / n
        gp = np.zeros_like(p)
        contrib = mask * (-gv / pyc) * (py >= PROB_FLOOR)
        np.put_along_axis(gp, pseudo[:, None].astype(np.intp), contrib[:, None], axis=1)
        return ((prob_strong, gp),)

    return _record(np.full((1, 1, 1, 1), value, dtype=p.dtype), (prob_strong,), grad_fn)


def consistency_l2(prob_weak: Tensor, prob_strong: Tensor) -> Tensor:
    """Mean over pixels of the squared L2 distance between probability vectors."""
    if prob_weak.shape != prob_strong.shape:
        raise ShapeError(
            f"consistency_l2 needs equal shapes: {prob_weak.shape} vs {prob_strong.shape}")
    d = prob_weak.data - prob_strong.data
    B, K, H, W = prob_weak.shape
    n = B * H * W
    value = (d * d).sum() / n

    def grad_fn(g):
        gv = float(g.reshape(-1)[0]) / n
        return ((prob_weak, 2.0 * gv * d), (prob_strong, -2.0 * gv * d))

    return _record(np.full((1, 1, 1, 1), value, dtype=d.dtype), (prob_weak, prob_strong), grad_fn)


def combined_loss(loss_x: Tensor, loss_u: Tensor) -> Tensor:
    """Arithmetic mean of the supervised and unlabeled losses."""
    return scale(add(loss_x, loss_u), 0.5)
