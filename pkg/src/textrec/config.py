"""Run configuration: model dimensions, objective constants, training schedule.

Config files are line-oriented ``key=value`` with ``#`` comments. Defaults
follow the reference setup where one exists (sequence length 20, 3x3 kernels,
unit mask-loss weight, 0.25 shrink ratio, the five-stage Adam learning-rate
staircase) and desk-scale channel widths elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["Config"]


def _parse_channels(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def _parse_schedule(text: str) -> tuple:
    out = []
    for part in text.split(","):
        steps, lr = part.split(":")
        out.append((int(steps), float(lr)))
    return tuple(out)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass
class Config:
    # geometry
    image_height: int = 64
    image_width: int = 256
    seq_len: int = 20
    kernel_size: int = 3
    # channel plan
    enc_channels: tuple = (16, 32, 64)
    feat_channels: int = 32
    cell_channels: int = 32
    bottleneck_channels: int = 16
    attn_channels: int = 16
    reduce_channels: int = 16
    # objective
    label_smoothing: float = 0.1
    mask_loss_weight: float = 1.0
    shrink_ratio: float = 0.25
    # training
    lr_schedule: tuple = ((600, 1e-4), (600, 1e-4), (600, 5e-5), (600, 1e-5), (600, 1e-6))
    batch_size: int = 8
    seed: int = 0
    # ablation switches
    uniform_attention: bool = False
    mask_branch: bool = True
    # dataset generation
    num_samples: int = 64
    min_text_len: int = 3
    max_text_len: int = 5
    noise_level: float = 0.05

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = [
            ("image_height", self.image_height), ("image_width", self.image_width),
            ("seq_len", self.seq_len), ("kernel_size", self.kernel_size),
            ("feat_channels", self.feat_channels), ("cell_channels", self.cell_channels),
            ("bottleneck_channels", self.bottleneck_channels),
            ("attn_channels", self.attn_channels), ("reduce_channels", self.reduce_channels),
            ("batch_size", self.batch_size), ("num_samples", self.num_samples),
            ("min_text_len", self.min_text_len), ("max_text_len", self.max_text_len),
        ]
        for name, value in positive:
            if value < 1:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.image_height % 8 or self.image_width % 8:
            raise ValueError(
                f"image extents must be divisible by 8, got "
                f"{self.image_height}x{self.image_width}"
            )
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if len(self.enc_channels) != 3 or any(c < 1 for c in self.enc_channels):
            raise ValueError(f"enc_channels needs three positive extents, got {self.enc_channels}")
        if not 0.0 <= self.label_smoothing <= 1.0:
            raise ValueError(f"label_smoothing must lie in [0, 1], got {self.label_smoothing}")
        if self.mask_loss_weight < 0:
            raise ValueError(f"mask_loss_weight must be >= 0, got {self.mask_loss_weight}")
        if not 0.0 < self.shrink_ratio <= 1.0:
            raise ValueError(f"shrink_ratio must lie in (0, 1], got {self.shrink_ratio}")
        if not self.lr_schedule or any(s < 1 or lr < 0 for s, lr in self.lr_schedule):
            raise ValueError(f"malformed lr_schedule {self.lr_schedule}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.max_text_len > self.seq_len - 2:
            raise ValueError(
                f"max_text_len {self.max_text_len} exceeds seq_len-2 = {self.seq_len - 2}"
            )

    @property
    def total_steps(self) -> int:
        return sum(s for s, _ in self.lr_schedule)

    def lr_at(self, step: int) -> float:
        """Learning rate for a zero-based global step index (staircase)."""
        upto = 0
        for steps, lr in self.lr_schedule:
            upto += steps
            if step < upto:
                return lr
        return self.lr_schedule[-1][1]

    @classmethod
    def tiny(cls) -> "Config":
        """Minimal geometry used by the gradient-check command."""
        return cls(
            image_height=16, image_width=32, seq_len=3,
            enc_channels=(4, 8, 16), feat_channels=8, cell_channels=8,
            bottleneck_channels=4, attn_channels=4, reduce_channels=4,
            lr_schedule=((10, 1e-4),), batch_size=1,
            num_samples=1, min_text_len=1, max_text_len=1,
        )

    @classmethod
    def load(cls, path) -> "Config":
        parsers = {
            "enc_channels": _parse_channels,
            "lr_schedule": _parse_schedule,
            "uniform_attention": _parse_bool,
            "mask_branch": _parse_bool,
        }
        types = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in types:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                try:
                    if key in parsers:
                        values[key] = parsers[key](value)
                    elif types[key] in ("int",):
                        values[key] = int(value)
                    else:
                        values[key] = float(value)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
        return cls(**values)

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "enc_channels":
                v = ",".join(str(c) for c in v)
            elif f.name == "lr_schedule":
                v = ",".join(f"{s}:{lr:g}" for s, lr in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"
