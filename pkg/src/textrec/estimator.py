"""Scikit-learn style front end for the recognizer.

`TextRecognizer` wraps the training loop and greedy decoder behind the usual
fit/predict/score surface so the model slots into sklearn pipelines and model
selection. Constructor arguments mirror the run configuration one to one.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import Config
from .data import CharsetCodec, Sample
from .network import forward
from .tensor import Tensor
from .train import run_training

__all__ = ["TextRecognizer", "check_image_batch", "check_texts"]


def check_image_batch(X, height: int, width: int) -> np.ndarray:
    """Coerce X to a float64 (n, 1, height, width) batch in [0, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None, :, :]
    if X.ndim == 3:
        X = X[:, None, :, :]
    if X.ndim != 4 or X.shape[1] != 1:
        raise ValueError(
            f"expected images shaped (n, {height}, {width}) or (n, 1, {height}, {width}), "
            f"got {X.shape}"
        )
    if X.shape[2:] != (height, width):
        raise ValueError(
            f"images are {X.shape[2]}x{X.shape[3]} but the estimator is configured "
            f"for {height}x{width}"
        )
    if not np.isfinite(X).all():
        raise ValueError("images contain non-finite values")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return X


def check_texts(y, max_chars: int) -> list:
    texts = [str(t) for t in y]
    for i, t in enumerate(texts):
        if len(t) > max_chars:
            raise ValueError(
                f"y[{i}] has {len(t)} characters; at most {max_chars} fit in the "
                f"configured sequence length"
            )
    return texts


class TextRecognizer(BaseEstimator):
    """Word-image recognizer built on an attention-equipped convolutional LSTM.

    Parameters mirror the run configuration: image geometry, channel plan,
    objective constants, and the training schedule. `fit` expects grayscale
    images in [0, 1] plus their strings; per-character boxes enable the
    mask-supervision branch and are required when `mask_branch` is set.
    """

    def __init__(self, image_height=32, image_width=64, seq_len=8,
                 enc_channels=(16, 32, 64), feat_channels=32, cell_channels=32,
                 bottleneck_channels=16, attn_channels=16, reduce_channels=16,
                 kernel_size=3, label_smoothing=0.1, mask_loss_weight=1.0,
                 shrink_ratio=0.25, learning_rate=1e-3, n_steps=1000,
                 batch_size=8, uniform_attention=False, mask_branch=True,
                 stop_accuracy=None, seed=0):
        self.image_height = image_height
        self.image_width = image_width
        self.seq_len = seq_len
        self.enc_channels = enc_channels
        self.feat_channels = feat_channels
        self.cell_channels = cell_channels
        self.bottleneck_channels = bottleneck_channels
        self.attn_channels = attn_channels
        self.reduce_channels = reduce_channels
        self.kernel_size = kernel_size
        self.label_smoothing = label_smoothing
        self.mask_loss_weight = mask_loss_weight
        self.shrink_ratio = shrink_ratio
        self.learning_rate = learning_rate
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.uniform_attention = uniform_attention
        self.mask_branch = mask_branch
        self.stop_accuracy = stop_accuracy
        self.seed = seed

    def _config(self, mask_branch: bool) -> Config:
        return Config(
            image_height=self.image_height, image_width=self.image_width,
            seq_len=self.seq_len, kernel_size=self.kernel_size,
            enc_channels=tuple(self.enc_channels),
            feat_channels=self.feat_channels, cell_channels=self.cell_channels,
            bottleneck_channels=self.bottleneck_channels,
            attn_channels=self.attn_channels, reduce_channels=self.reduce_channels,
            label_smoothing=self.label_smoothing,
            mask_loss_weight=self.mask_loss_weight, shrink_ratio=self.shrink_ratio,
            lr_schedule=((int(self.n_steps), float(self.learning_rate)),),
            batch_size=self.batch_size, seed=self.seed,
            uniform_attention=self.uniform_attention, mask_branch=mask_branch,
            min_text_len=1, max_text_len=max(1, self.seq_len - 2),
        )

    def fit(self, X, y, boxes=None):
        """Train on images X and strings y.

        `boxes` holds per-sample lists of (x_min, y_min, x_max, y_max)
        character boxes; without them the mask branch is dropped for this fit.
        """
        X = check_image_batch(X, self.image_height, self.image_width)
        texts = check_texts(y, self.seq_len - 2)
        if len(texts) != X.shape[0]:
            raise ValueError(f"{X.shape[0]} images but {len(texts)} strings")
        use_mask = self.mask_branch and boxes is not None
        if boxes is not None and len(boxes) != X.shape[0]:
            raise ValueError(f"{X.shape[0]} images but {len(boxes)} box lists")
        config = self._config(mask_branch=use_mask)
        codec = CharsetCodec()
        samples = []
        for i, text in enumerate(texts):
            samples.append(Sample(
                image=Tensor(X[i : i + 1]),
                text=text.lower(),
                boxes=[tuple(b) for b in boxes[i]] if boxes is not None else [],
                target=codec.encode_target(text, self.seq_len),
            ))
        result = run_training(config, samples, stop_accuracy=self.stop_accuracy)
        self.config_ = config
        self.model_ = result["model"]
        self.n_iter_ = result["steps_run"]
        self.history_ = result["history"]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this TextRecognizer has not been fitted yet")

    def predict(self, X) -> np.ndarray:
        """Greedy-decoded strings, one per image."""
        self._check_fitted()
        X = check_image_batch(X, self.image_height, self.image_width)
        codec = CharsetCodec()
        out = []
        for lo in range(0, X.shape[0], max(1, self.batch_size)):
            result = forward(self.model_, Tensor(X[lo : lo + max(1, self.batch_size)]))
            out.extend(codec.decode_prediction(row) for row in result.predicted_indices())
        return np.asarray(out, dtype=object)

    def predict_proba(self, X) -> np.ndarray:
        """Per-step class distributions, shaped (n, seq_len, 39)."""
        self._check_fitted()
        X = check_image_batch(X, self.image_height, self.image_width)
        chunks = []
        for lo in range(0, X.shape[0], max(1, self.batch_size)):
            result = forward(self.model_, Tensor(X[lo : lo + max(1, self.batch_size)]))
            chunks.append(result.probs_array().transpose(1, 0, 2))
        return np.concatenate(chunks, axis=0)

    def score(self, X, y) -> float:
        """Exact-match sequence accuracy."""
        self._check_fitted()
        preds = self.predict(X)
        texts = [str(t).lower() for t in y]
        if len(texts) != len(preds):
            raise ValueError(f"{len(preds)} images but {len(texts)} strings")
        return float(np.mean([p == t for p, t in zip(preds, texts)]))
