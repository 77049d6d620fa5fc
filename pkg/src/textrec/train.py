"""Training loop, evaluation, and checkpoint plumbing.

One step: assemble a batch, run the forward pass, take the total loss, pull
gradients through the tape, and apply one Adam update at the schedule's
current learning rate. Metrics are appended as JSON lines per step; the
checkpoint (parameters, optimizer moments, step counter) is rewritten at every
epoch boundary and at the end.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .checkpoint import load_tensors, save_tensors
from .config import Config
from .data import CharsetCodec
from .losses import mask_loss, rasterize_masks, sequence_loss, smoothed_targets, total_loss
from .network import ModelParams, N_CLASSES, forward
from .optim import Adam
from .tensor import GradTape, Tensor, backward

__all__ = [
    "NumericError",
    "run_training",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint_into",
    "model_from_checkpoint",
]


class NumericError(RuntimeError):
    """Training produced a non-finite value."""


def _check_samples(config: Config, samples: list) -> None:
    if not samples:
        raise ValueError("dataset is empty")
    want = (1, 1, config.image_height, config.image_width)
    for i, s in enumerate(samples):
        if s.image.dims != want:
            raise ValueError(
                f"sample {i} has image extents {s.image.dims}, config expects {want}"
            )
        if len(s.target) != config.seq_len:
            raise ValueError(
                f"sample {i} has target length {len(s.target)}, config expects {config.seq_len}"
            )


def _sequence_accuracy(codec: CharsetCodec, pred_indices: np.ndarray, texts: list) -> float:
    hits = 0
    for row, text in zip(pred_indices, texts):
        if codec.decode_prediction(row) == text.lower():
            hits += 1
    return hits / len(texts)


def save_checkpoint(path, model: ModelParams, optimizer: Adam | None = None,
                    step: int = 0) -> None:
    tensors = {name: t.data for name, t in model.named().items()}
    if optimizer is not None:
        tensors.update(optimizer.state_tensors())
    tensors["train.step"] = np.asarray(float(step))
    save_tensors(path, tensors)


def load_checkpoint_into(model: ModelParams, path, optimizer: Adam | None = None) -> int:
    """Load parameters (and optimizer state when present); returns the step counter.

    Shape disagreements between the checkpoint and the model built from the
    config are reported together as an explicit diff.
    """
    stored = load_tensors(path)
    named = model.named()
    diffs = []
    for name, t in named.items():
        if name not in stored:
            diffs.append(f"  {name}: missing from checkpoint")
        elif tuple(stored[name].shape) != t.dims:
            diffs.append(f"  {name}: checkpoint {tuple(stored[name].shape)} vs config {t.dims}")
    if diffs:
        raise ValueError("checkpoint does not match config:\n" + "\n".join(diffs))
    for name, t in named.items():
        t.data[...] = stored[name]
    if optimizer is not None and "opt.t" in stored:
        optimizer.load_state(stored)
    return int(stored.get("train.step", 0.0))


def model_from_checkpoint(config: Config, path) -> ModelParams:
    model = ModelParams.create(config)
    load_checkpoint_into(model, path)
    return model


def evaluate(model: ModelParams, samples: list, batch_size: int = 16) -> dict:
    """Greedy-decode a dataset: exact-match sequence accuracy plus per-character
    accuracy (matching positions over max(len(truth), len(prediction)))."""
    config = model.config
    _check_samples(config, samples)
    codec = CharsetCodec()
    seq_hits = 0
    char_hits = 0
    char_total = 0
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        images = np.concatenate([s.image.data for s in chunk], axis=0)
        out = forward(model, Tensor(images))
        for row, sample in zip(out.predicted_indices(), chunk):
            pred = codec.decode_prediction(row)
            truth = sample.text.lower()
            if pred == truth:
                seq_hits += 1
            span = max(len(truth), len(pred))
            char_total += span
            char_hits += sum(1 for a, b in zip(truth, pred) if a == b)
    return {
        "sequence_accuracy": seq_hits / len(samples),
        "char_accuracy": char_hits / char_total if char_total else 1.0,
        "n": len(samples),
    }


def run_training(config: Config, samples: list, out_path=None, metrics_path=None,
                 resume_path=None, max_steps: int | None = None,
                 stop_accuracy: float | None = None, eval_every: int = 50,
                 log=None) -> dict:
    """Run the learning-rate schedule over the dataset.

    Stops early when `stop_accuracy` is reached on the full training set
    (checked every `eval_every` steps). Returns the trained model, the number
    of steps run, and the metrics history.
    """
    _check_samples(config, samples)
    codec = CharsetCodec()
    model = ModelParams.create(config)
    optimizer = Adam({name: t for name, t in model.named().items()})
    start_step = 0
    if resume_path is not None:
        start_step = load_checkpoint_into(model, resume_path, optimizer)

    total_steps = config.total_steps if max_steps is None else max_steps
    steps_per_epoch = max(1, math.ceil(len(samples) / config.batch_size))
    history: list[dict] = []
    metrics_file = open(metrics_path, "a", encoding="utf-8") if metrics_path else None

    mask_cache = None
    if config.mask_branch:
        mask_cache = [
            rasterize_masks(s.boxes, config.image_height, config.image_width,
                            ratio=config.shrink_ratio)[None, :, :]
            for s in samples
        ]

    step = start_step
    stopped = False
    final_accuracy = None
    try:
        while step < total_steps and not stopped:
            epoch = step // steps_per_epoch
            order = np.random.default_rng([config.seed, epoch]).permutation(len(samples))
            offset = (step % steps_per_epoch) * config.batch_size
            for lo in range(offset, len(samples), config.batch_size):
                idx = order[lo : lo + config.batch_size]
                images = np.concatenate([samples[i].image.data for i in idx], axis=0)
                targets = np.stack([samples[i].target for i in idx])
                dists = smoothed_targets(targets, N_CLASSES, config.label_smoothing)

                tape = GradTape()
                tape.watch_all(model.named())
                out = forward(model, Tensor(images))
                ls = sequence_loss(out.probs, dists)
                lm = None
                if config.mask_branch:
                    gt = np.stack([mask_cache[i] for i in idx])
                    lm = mask_loss(gt, out.mask)
                loss = total_loss(ls, lm, config.mask_loss_weight)

                ls_v = ls.item()
                lm_v = lm.item() if lm is not None else 0.0
                loss_v = loss.item()
                if not np.isfinite(loss_v):
                    raise NumericError(
                        f"non-finite loss at step {step + 1}: "
                        f"Ls={ls_v} Lm={lm_v} L={loss_v}"
                    )
                grads = backward(loss, tape)
                try:
                    optimizer.step(grads, lr=config.lr_at(step))
                except FloatingPointError as exc:
                    raise NumericError(f"step {step + 1}: {exc}") from None

                step += 1
                acc = _sequence_accuracy(codec, out.predicted_indices(),
                                         [samples[i].text for i in idx])
                record = {"step": step, "Ls": ls_v, "Lm": lm_v, "L": loss_v,
                          "seq_acc": acc}
                history.append(record)
                if metrics_file:
                    metrics_file.write(json.dumps(record) + "\n")
                    metrics_file.flush()

                if stop_accuracy is not None and step % eval_every == 0:
                    result = evaluate(model, samples)
                    final_accuracy = result["sequence_accuracy"]
                    if log:
                        log(f"step {step}: train accuracy {final_accuracy:.3f}")
                    if final_accuracy >= stop_accuracy:
                        stopped = True
                        break
                if step >= total_steps:
                    break
            if out_path is not None:
                save_checkpoint(out_path, model, optimizer, step)
            if log and not stopped:
                log(f"epoch {step // steps_per_epoch}: step {step}/{total_steps} "
                    f"L={history[-1]['L']:.4f}")
    finally:
        if metrics_file:
            metrics_file.close()
    if out_path is not None:
        save_checkpoint(out_path, model, optimizer, step)
    return {
        "model": model,
        "optimizer": optimizer,
        "steps_run": step,
        "history": history,
        "train_accuracy": final_accuracy,
    }
