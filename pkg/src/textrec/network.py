"""Desk-scale recognizer network: a small striding encoder, twin decoder
branches (feature maps and character-center masks), channel concatenation of
the two, and the transcription head that unrolls the attention cell and maps
every cell output through a shared 1x1 reduction, dense layer, and softmax."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .cells import AttnConvLstmParams, StepTrace, unroll
from .config import Config
from .tensor import ShapeError, Tensor

__all__ = [
    "N_CLASSES",
    "BackboneParams",
    "HeadParams",
    "ModelParams",
    "ForwardResult",
    "encode",
    "decode_features",
    "decode_mask",
    "fuse",
    "transcribe",
    "forward",
]

N_CLASSES = 39


def _uniform(rng, shape, fan_in):
    s = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-s, s, size=shape))


@dataclass
class BackboneParams:
    """Encoder stages (stride-2 via pooling) and the two decoder branches.

    Each decoder upsamples the 1/8 stage, adds a projected 1/4 skip, and runs a
    final conv; the feature branch ends in relu, the mask branch in sigmoid.
    """

    enc1_w: Tensor
    enc1_b: Tensor
    enc2_w: Tensor
    enc2_b: Tensor
    enc3_w: Tensor
    enc3_b: Tensor
    feat_up_w: Tensor
    feat_up_b: Tensor
    feat_skip_w: Tensor
    feat_out_w: Tensor
    feat_out_b: Tensor
    mask_up_w: Tensor
    mask_up_b: Tensor
    mask_skip_w: Tensor
    mask_out_w: Tensor
    mask_out_b: Tensor

    @classmethod
    def create(cls, rng, enc_channels, feat_channels, k=3) -> "BackboneParams":
        c1, c2, c3 = enc_channels
        cf = feat_channels

        def conv(cout, cin, size=k):
            return _uniform(rng, (cout, cin, size, size), cin * size * size)

        def bias(n):
            return Tensor(np.zeros(n))

        return cls(
            enc1_w=conv(c1, 1), enc1_b=bias(c1),
            enc2_w=conv(c2, c1), enc2_b=bias(c2),
            enc3_w=conv(c3, c2), enc3_b=bias(c3),
            feat_up_w=conv(cf, c3), feat_up_b=bias(cf),
            feat_skip_w=conv(cf, c2, size=1),
            feat_out_w=conv(cf, cf), feat_out_b=bias(cf),
            mask_up_w=conv(cf, c3), mask_up_b=bias(cf),
            mask_skip_w=conv(cf, c2, size=1),
            mask_out_w=conv(1, cf), mask_out_b=bias(1),
        )

    def named(self) -> dict[str, Tensor]:
        return {
            "enc.s1.w": self.enc1_w, "enc.s1.b": self.enc1_b,
            "enc.s2.w": self.enc2_w, "enc.s2.b": self.enc2_b,
            "enc.s3.w": self.enc3_w, "enc.s3.b": self.enc3_b,
            "dec.feat.up.w": self.feat_up_w, "dec.feat.up.b": self.feat_up_b,
            "dec.feat.skip.w": self.feat_skip_w,
            "dec.feat.out.w": self.feat_out_w, "dec.feat.out.b": self.feat_out_b,
            "dec.mask.up.w": self.mask_up_w, "dec.mask.up.b": self.mask_up_b,
            "dec.mask.skip.w": self.mask_skip_w,
            "dec.mask.out.w": self.mask_out_w, "dec.mask.out.b": self.mask_out_b,
        }


@dataclass
class HeadParams:
    """Shared transcription head: 1x1 channel reduction, one dense layer, softmax."""

    reduce_w: Tensor
    fc_w: Tensor
    fc_b: Tensor

    @classmethod
    def create(cls, rng, cell_channels, reduce_channels, map_h, map_w) -> "HeadParams":
        d = reduce_channels * map_h * map_w
        return cls(
            reduce_w=_uniform(rng, (reduce_channels, cell_channels, 1, 1), cell_channels),
            fc_w=_uniform(rng, (d, N_CLASSES), d),
            fc_b=Tensor(np.zeros(N_CLASSES)),
        )

    def named(self) -> dict[str, Tensor]:
        return {"head.reduce.w": self.reduce_w, "head.fc.w": self.fc_w, "head.fc.b": self.fc_b}


@dataclass
class ModelParams:
    """All trainable tensors plus the configuration they were built for."""

    config: Config
    backbone: BackboneParams
    cell: AttnConvLstmParams
    head: HeadParams

    @classmethod
    def create(cls, config: Config, rng=None) -> "ModelParams":
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        c_x = config.feat_channels + (1 if config.mask_branch else 0)
        backbone = BackboneParams.create(rng, config.enc_channels, config.feat_channels,
                                         k=config.kernel_size)
        cell = AttnConvLstmParams.create(rng, c_x, config.cell_channels,
                                         config.bottleneck_channels, config.attn_channels,
                                         k=config.kernel_size)
        head = HeadParams.create(rng, config.cell_channels, config.reduce_channels,
                                 config.image_height // 4, config.image_width // 4)
        return cls(config=config, backbone=backbone, cell=cell, head=head)

    def named(self) -> dict[str, Tensor]:
        out = dict(self.backbone.named())
        out.update({f"cell.{k}": v for k, v in self.cell.named().items()})
        out.update(self.head.named())
        return out


@dataclass
class ForwardResult:
    """Everything one forward pass produces."""

    features: Tensor
    mask: Tensor | None
    logits: list[Tensor]
    probs: list[Tensor]
    traces: list[StepTrace]

    def probs_array(self) -> np.ndarray:
        return np.stack([p.data for p in self.probs])

    def predicted_indices(self) -> np.ndarray:
        """(N, T) greedy argmax indices."""
        return self.probs_array().argmax(axis=2).T


def encode(backbone: BackboneParams, image: Tensor):
    """Three conv+relu+pool stages at 1/2, 1/4 and 1/8 resolution."""
    n, c, h, w = image.dims
    if c != 1:
        raise ShapeError(f"encode: expected grayscale input, got {c} channels")
    if h % 8 or w % 8:
        raise ShapeError(f"encode: image extents must be divisible by 8, got {h}x{w}")
    s1 = T.avg_pool2(T.relu(T.conv2d(image, backbone.enc1_w, backbone.enc1_b)))
    s2 = T.avg_pool2(T.relu(T.conv2d(s1, backbone.enc2_w, backbone.enc2_b)))
    s3 = T.avg_pool2(T.relu(T.conv2d(s2, backbone.enc3_w, backbone.enc3_b)))
    return s1, s2, s3


def _decode(stages, up_w, up_b, skip_w, out_w, out_b):
    _, s2, s3 = stages
    y = T.relu(T.conv2d(T.upsample2(s3), up_w, up_b))
    y = y + T.conv2d(s2, skip_w)
    return T.conv2d(y, out_w, out_b)


def decode_features(backbone: BackboneParams, stages) -> Tensor:
    return T.relu(_decode(stages, backbone.feat_up_w, backbone.feat_up_b,
                          backbone.feat_skip_w, backbone.feat_out_w, backbone.feat_out_b))


def decode_mask(backbone: BackboneParams, stages) -> Tensor:
    return T.sigmoid(_decode(stages, backbone.mask_up_w, backbone.mask_up_b,
                             backbone.mask_skip_w, backbone.mask_out_w, backbone.mask_out_b))


def fuse(features: Tensor, mask: Tensor) -> Tensor:
    """Channel concatenation of feature maps and mask, mask last."""
    return T.concat_channels(features, mask)


def transcribe(head: HeadParams, cell: AttnConvLstmParams, x: Tensor, steps: int,
               uniform_attention: bool = False):
    """Unroll the cell and classify every output with the shared head."""
    states, traces = unroll(cell, x, steps, uniform_attention=uniform_attention)
    n = x.dims[0]
    logits, probs = [], []
    for state in states:
        reduced = T.conv2d(state.h, head.reduce_w)
        flat = T.reshape(reduced, (n, reduced.size // n))
        step_logits = T.dense(flat, head.fc_w, head.fc_b)
        logits.append(step_logits)
        probs.append(T.softmax_rows(step_logits))
    return logits, probs, traces


def forward(model: ModelParams, image: Tensor) -> ForwardResult:
    """Full pass: encode, decode both branches, fuse, transcribe."""
    cfg = model.config
    stages = encode(model.backbone, image)
    features = decode_features(model.backbone, stages)
    if cfg.mask_branch:
        mask = decode_mask(model.backbone, stages)
        x = fuse(features, mask)
    else:
        mask = None
        x = features
    logits, probs, traces = transcribe(model.head, model.cell, x, cfg.seq_len,
                                       uniform_attention=cfg.uniform_attention)
    return ForwardResult(features=features, mask=mask, logits=logits, probs=probs,
                         traces=traces)
