"""Training objective: smoothed sequence cross-entropy, dice-style mask loss,
their weighted total, and character-center mask ground truth."""

from __future__ import annotations

import warnings

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

__all__ = [
    "label_smooth",
    "smoothed_targets",
    "shrink_box",
    "rasterize_masks",
    "mask_loss",
    "sequence_loss",
    "total_loss",
    "clamp_event_count",
    "reset_clamp_events",
]

LOG_FLOOR = 1e-12
DICE_GUARD = 1e-8

_clamp_events = 0


def clamp_event_count() -> int:
    """How many (target > 0, prob < floor) positions hit the log clamp so far."""
    return _clamp_events


def reset_clamp_events() -> None:
    global _clamp_events
    _clamp_events = 0


def label_smooth(one_hot: np.ndarray, eps: float) -> np.ndarray:
    """Mix one-hot rows with the uniform distribution: (1-eps)*y + eps/K."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"smoothing must lie in [0, 1], got {eps}")
    one_hot = np.asarray(one_hot, dtype=np.float64)
    k = one_hot.shape[-1]
    return (1.0 - eps) * one_hot + eps / k


def smoothed_targets(indices: np.ndarray, n_classes: int, eps: float) -> np.ndarray:
    """Per-step smoothed distributions, (N, T) index array -> (T, N, K)."""
    indices = np.asarray(indices, dtype=np.int64)
    n, steps = indices.shape
    one_hot = np.zeros((steps, n, n_classes))
    for t in range(steps):
        one_hot[t, np.arange(n), indices[:, t]] = 1.0
    return label_smooth(one_hot, eps)


def shrink_box(box, ratio: float):
    """Shrink a (x_min, y_min, x_max, y_max) box about its center by `ratio`."""
    x_min, y_min, x_max, y_max = (float(v) for v in box)
    if x_max <= x_min or y_max <= y_min:
        raise ValueError(f"degenerate box {box}")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"shrink ratio must lie in (0, 1], got {ratio}")
    w = x_max - x_min
    h = y_max - y_min
    return (
        (x_min + x_max - w * ratio) / 2.0,
        (y_min + y_max - h * ratio) / 2.0,
        (x_min + x_max + w * ratio) / 2.0,
        (y_min + y_max + h * ratio) / 2.0,
    )


def rasterize_masks(boxes, height: int, width: int, ratio: float = 0.25) -> np.ndarray:
    """Binary character-center mask at quarter resolution.

    Boxes are (x_min, y_min, x_max, y_max) in full-resolution image pixels with
    exclusive maxima. Each box is scaled to quarter resolution, shrunk about
    its center, and every quarter-res pixel whose center falls inside the
    shrunk box (boundaries inclusive) is set to 1. Out-of-bounds boxes are
    clamped to the image with a warning.
    """
    if height % 4 or width % 4:
        raise ShapeError(f"image extents must be divisible by 4, got {height}x{width}")
    mh, mw = height // 4, width // 4
    mask = np.zeros((mh, mw))
    for box in boxes:
        x_min, y_min, x_max, y_max = (float(v) for v in box)
        clamped = (max(x_min, 0.0), max(y_min, 0.0), min(x_max, float(width)), min(y_max, float(height)))
        if clamped != (x_min, y_min, x_max, y_max):
            warnings.warn(f"box {box} extends outside {width}x{height} image; clamped")
            x_min, y_min, x_max, y_max = clamped
        g = shrink_box((x_min / 4.0, y_min / 4.0, x_max / 4.0, y_max / 4.0), ratio)
        x_lo = int(np.ceil(g[0] - 0.5))
        x_hi = int(np.floor(g[2] - 0.5))
        y_lo = int(np.ceil(g[1] - 0.5))
        y_hi = int(np.floor(g[3] - 0.5))
        x_lo, y_lo = max(x_lo, 0), max(y_lo, 0)
        x_hi, y_hi = min(x_hi, mw - 1), min(y_hi, mh - 1)
        if x_lo <= x_hi and y_lo <= y_hi:
            mask[y_lo : y_hi + 1, x_lo : x_hi + 1] = 1.0
    return mask


def mask_loss(m_true, m_pred: Tensor) -> Tensor:
    """Dice-style overlap loss 0.01 * (1 - 2*sum(m o m~)/(sum m + sum m~)).

    Numerator and denominator share a small guard so the empty-vs-empty case
    is exactly zero and the loss stays within [0, 0.01].
    """
    if not isinstance(m_true, Tensor):
        m_true = Tensor(m_true)
    if m_true.data.shape != m_pred.data.shape:
        raise ShapeError(
            f"mask_loss: extents differ, truth {m_true.data.shape} vs prediction {m_pred.data.shape}"
        )
    inter = T.sum_all(T.mul(m_true, m_pred))
    denom = T.add_const(T.add(T.sum_all(m_true), T.sum_all(m_pred)), DICE_GUARD)
    dice = T.div(T.add_const(T.scale(inter, 2.0), DICE_GUARD), denom)
    return T.scale(T.add_const(T.neg(dice), 1.0), 0.01)


def sequence_loss(probs, targets: np.ndarray) -> Tensor:
    """Mean smoothed cross-entropy over steps and batch.

    `probs` is either a list of per-step (N, K) probability tensors or a single
    (T, N, K) tensor; `targets` is the matching (T, N, K) distribution array.
    Probabilities below the log floor are clamped and counted.
    """
    global _clamp_events
    targets = np.asarray(targets, dtype=np.float64)
    if isinstance(probs, Tensor):
        # rank-3 tensor path: operate on the whole block at once
        if probs.data.shape != targets.shape:
            raise ShapeError(
                f"sequence_loss: probs {probs.data.shape} vs targets {targets.shape}"
            )
        _clamp_events += int(((probs.data < LOG_FLOOR) & (targets > 0)).sum())
        n_rows = targets.shape[0] * targets.shape[1]
        return T.scale(T.sum_all(T.mul(T.log_clamped(probs, LOG_FLOOR), Tensor(targets))),
                       -1.0 / n_rows)
    if len(probs) != targets.shape[0]:
        raise ShapeError(f"sequence_loss: {len(probs)} steps vs targets {targets.shape}")
    n_rows = targets.shape[0] * targets.shape[1]
    total = None
    for t, p in enumerate(probs):
        if p.data.shape != targets.shape[1:]:
            raise ShapeError(
                f"sequence_loss: step {t} probs {p.data.shape} vs targets {targets.shape[1:]}"
            )
        _clamp_events += int(((p.data < LOG_FLOOR) & (targets[t] > 0)).sum())
        part = T.sum_all(T.mul(T.log_clamped(p, LOG_FLOOR), Tensor(targets[t])))
        total = part if total is None else T.add(total, part)
    return T.scale(total, -1.0 / n_rows)


def total_loss(seq, mask, weight: float = 1.0):
    """Weighted sum of the sequence and mask losses."""
    if weight < 0:
        raise ValueError(f"mask loss weight must be >= 0, got {weight}")
    if mask is None:
        return seq
    return T.add(seq, T.scale(mask, weight))
