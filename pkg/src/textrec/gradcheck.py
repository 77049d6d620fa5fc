"""Finite-difference verification of the reverse pass over the whole model.

Builds a deterministic synthetic batch, takes analytic gradients of the total
loss, and compares sampled entries of every parameter tensor against central
differences. Entries whose +-h bump straddles a relu kink are retried with a
smaller step before counting as failures (a wrong analytic gradient does not
improve under step refinement; a kink artifact does).
"""

from __future__ import annotations

import numpy as np

from .config import Config
from .losses import mask_loss, sequence_loss, smoothed_targets, total_loss
from .network import ModelParams, N_CLASSES, forward
from .tensor import GradTape, Tensor, backward

__all__ = ["check_model_gradients", "gradcheck_passed"]

STEP_SIZES = (1e-5, 1e-6, 1e-7)


def _make_case(config: Config, seed: int):
    rng = np.random.default_rng(seed)
    model = ModelParams.create(config, rng)
    image = rng.random((1, 1, config.image_height, config.image_width))
    body = rng.integers(0, 36, size=config.seq_len - 2)
    indices = np.concatenate(([36], body, [37]))[None, :]
    targets = smoothed_targets(indices, N_CLASSES, config.label_smoothing)
    mask_gt = (rng.random((1, 1, config.image_height // 4, config.image_width // 4))
               > 0.6).astype(float)
    return model, image, targets, mask_gt


def check_model_gradients(config: Config | None = None, seed: int = 0,
                          entries_per_param: int = 6, tolerance: float = 1e-3,
                          corrupt: str | None = None) -> list:
    """Max relative error per parameter group, sampled entries.

    Returns one row per parameter: {"name", "max_rel_err", "passed"}. The
    `corrupt` hook perturbs that parameter's analytic gradient before the
    comparison — a negative control for the checker itself.
    """
    config = config if config is not None else Config.tiny()
    model, image, targets, mask_gt = _make_case(config, seed)

    def loss_value() -> float:
        out = forward(model, Tensor(image))
        ls = sequence_loss(out.probs, targets)
        lm = mask_loss(mask_gt, out.mask) if out.mask is not None else None
        return total_loss(ls, lm, config.mask_loss_weight).item()

    def loss_tensor():
        out = forward(model, Tensor(image))
        ls = sequence_loss(out.probs, targets)
        lm = mask_loss(mask_gt, out.mask) if out.mask is not None else None
        return total_loss(ls, lm, config.mask_loss_weight)

    tape = GradTape()
    named = model.named()
    tape.watch_all(named)
    grads = backward(loss_tensor(), tape)
    if corrupt is not None:
        grads[corrupt] = grads[corrupt] + 1e-2

    entry_rng = np.random.default_rng(seed + 1)
    rows = []
    for name, t in named.items():
        flat = t.data.reshape(-1)
        picks = entry_rng.choice(flat.size, size=min(entries_per_param, flat.size),
                                 replace=False)
        worst = 0.0
        for i in picks:
            a = grads[name].reshape(-1)[i]
            best = np.inf
            for h in STEP_SIZES:
                orig = flat[i]
                flat[i] = orig + h
                up = loss_value()
                flat[i] = orig - h
                down = loss_value()
                flat[i] = orig
                fd = (up - down) / (2.0 * h)
                best = min(best, abs(a - fd) / max(1.0, abs(a)))
                if best < tolerance / 10.0:
                    break
            worst = max(worst, best)
        rows.append({"name": name, "max_rel_err": worst, "passed": worst < tolerance})
    return rows


def gradcheck_passed(rows) -> bool:
    return all(r["passed"] for r in rows)
