"""Synthetic word-image data: charset codec, glyph renderer with per-character
boxes, and dataset files (binary PGM images plus a JSON-lines manifest).

Rendering places glyphs on a grid aligned so that every character box, after
quarter-resolution scaling and center shrinking, covers at least one mask
pixel: with an even glyph scale the box extents are even, and an origin chosen
in the right residue class mod 4 puts the shrunk box center exactly on a
quarter-res pixel center.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .glyphs import GLYPHS, glyph_bitmap
from .tensor import Tensor

__all__ = [
    "CharsetCodec",
    "Sample",
    "render_sample",
    "make_dataset",
    "load_dataset",
    "write_pgm",
    "read_pgm",
]

_LETTERS = "abcdefghijklmnopqrstuvwxyz"
_DIGITS = "0123456789"


class CharsetCodec:
    """Bijection between the 39-symbol charset and indices.

    Indices 0-25 are 'a'-'z', 26-35 are '0'-'9', then START, EOS, and a
    catch-all OTHER for any remaining symbol. Text is case-folded before
    encoding; targets are [START, chars..., EOS, EOS...] padded to length T.
    """

    START = 36
    EOS = 37
    OTHER = 38
    SIZE = 39

    def char_index(self, ch: str) -> int:
        ch = ch.lower()
        if ch in _LETTERS:
            return ord(ch) - ord("a")
        if ch in _DIGITS:
            return 26 + ord(ch) - ord("0")
        return self.OTHER

    def index_char(self, idx: int) -> str:
        if 0 <= idx < 26:
            return chr(ord("a") + idx)
        if 26 <= idx < 36:
            return chr(ord("0") + idx - 26)
        return ""

    def encode_target(self, text: str, seq_len: int) -> np.ndarray:
        if len(text) > seq_len - 2:
            raise ValueError(
                f"text of length {len(text)} does not fit in {seq_len} steps "
                f"(need room for START and EOS)"
            )
        out = np.full(seq_len, self.EOS, dtype=np.int64)
        out[0] = self.START
        for i, ch in enumerate(text):
            out[1 + i] = self.char_index(ch)
        return out

    def decode_prediction(self, indices) -> str:
        chars = []
        for idx in indices:
            idx = int(idx)
            if idx == self.START or idx == self.OTHER:
                continue
            if idx == self.EOS:
                break
            chars.append(self.index_char(idx))
        return "".join(chars)


@dataclass
class Sample:
    """One rendered word: grayscale image, text, per-character boxes, target."""

    image: Tensor
    text: str
    boxes: list
    target: np.ndarray


def _axis_residue(extent_px: int) -> int:
    # origin residue (mod 4) that puts the shrunk quarter-res box center on a
    # pixel center; extent must be even
    return ((4 - extent_px) // 2) % 4


def _align_up(value: int, residue: int) -> int:
    return value + (residue - value) % 4


def render_sample(seed: int, text: str, height: int = 32, width: int = 64,
                  noise: float = 0.05, seq_len: int = 20) -> Sample:
    """Render `text` onto a height x width canvas, deterministic per seed.

    Glyphs are white-on-black 5x7 bitmaps at a random even scale, laid out
    left to right with randomized gaps and per-glyph vertical wobble. Pixel
    values are quantized to the 8-bit grid so the PGM round trip is lossless.
    """
    codec = CharsetCodec()
    target = codec.encode_target(text, seq_len)
    word = text.lower()
    for ch in word:
        if ch not in GLYPHS:
            raise ValueError(f"cannot render character {ch!r}; charset is [a-z0-9]")
    rng = np.random.default_rng(seed)
    n = len(word)

    def min_gap(s):
        g = (-5 * s) % 4  # keeps the advance a multiple of 4
        return g if g else 4

    scales = [s for s in (2, 4, 6) if 7 * s <= height - 5 and (
        n == 0 or (n * 5 * s + (n - 1) * min_gap(s)) <= width - 6)]
    if not scales:
        raise ValueError(f"text {text!r} does not fit on a {height}x{width} canvas")
    s = int(rng.choice(scales))

    canvas = np.zeros((height, width))
    boxes: list = []
    if n:
        gap = min_gap(s)
        span = n * 5 * s + (n - 1) * gap
        slack = width - 2 - span
        rx = _axis_residue(5 * s)
        ry = _axis_residue(7 * s)
        x = _align_up(1 + int(rng.integers(0, max(slack - 3, 0) + 1)), rx)
        y_lo = _align_up(1, ry)
        y_hi = y_lo + 4 * ((height - 1 - 7 * s - y_lo) // 4)
        base_y = y_lo + 4 * int(rng.integers(0, (y_hi - y_lo) // 4 + 1))
        for ch in word:
            wobble = 4 * int(rng.integers(-1, 2))
            y = min(max(base_y + wobble, y_lo), y_hi)
            bitmap = np.kron(glyph_bitmap(ch), np.ones((s, s)))
            canvas[y : y + 7 * s, x : x + 5 * s] = np.maximum(
                canvas[y : y + 7 * s, x : x + 5 * s], bitmap)
            boxes.append((x, y, x + 5 * s, y + 7 * s))
            x += 5 * s + gap

    if noise > 0:
        canvas = canvas + rng.normal(0.0, noise, size=canvas.shape)
    canvas = np.clip(canvas, 0.0, 1.0)
    canvas = np.round(canvas * 255.0) / 255.0  # 8-bit grid, lossless file round trip
    image = Tensor(canvas.reshape(1, 1, height, width))
    return Sample(image=image, text=word, boxes=boxes, target=target)


def _random_text(rng: np.random.Generator, min_len: int, max_len: int) -> str:
    alphabet = _LETTERS + _DIGITS
    n = int(rng.integers(min_len, max_len + 1))
    return "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=n))


def make_dataset(out_dir, seed: int, count: int, min_len: int = 3, max_len: int = 5,
                 height: int = 32, width: int = 64, noise: float = 0.05,
                 seq_len: int = 20) -> Path:
    """Write `count` rendered samples plus a manifest; returns the manifest path.

    Per-sample seeds derive from (seed, index), so regeneration with the same
    arguments reproduces every byte.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for i in range(count):
            rng = np.random.default_rng([seed, i])
            text = _random_text(rng, min_len, max_len)
            sample = render_sample(int(rng.integers(0, 2**32)), text,
                                   height=height, width=width, noise=noise,
                                   seq_len=seq_len)
            rel = f"images/{i:05d}.pgm"
            img = np.round(sample.image.data[0, 0] * 255.0).astype(np.uint8)
            write_pgm(out_dir / rel, img)
            record = {
                "image": rel,
                "text": sample.text,
                "boxes": [[int(v) for v in box] for box in sample.boxes],
            }
            fh.write(json.dumps(record) + "\n")
    return manifest


def load_dataset(path, seq_len: int = 20) -> list:
    """Read a dataset directory (or its manifest path) back into samples."""
    path = Path(path)
    manifest = path / "manifest.jsonl" if path.is_dir() else path
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest at {manifest}")
    root = manifest.parent
    codec = CharsetCodec()
    samples: list = []
    with open(manifest, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                rel, text = record["image"], record["text"]
                boxes = [tuple(int(v) for v in box) for box in record["boxes"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{manifest}:{lineno}: malformed manifest entry: {exc}") from None
            img = read_pgm(root / rel).astype(np.float64) / 255.0
            image = Tensor(img.reshape(1, 1, *img.shape))
            samples.append(Sample(image=image, text=text, boxes=boxes,
                                  target=codec.encode_target(text, seq_len)))
    return samples


def write_pgm(path, img: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255)."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"write_pgm needs a 2-D uint8 array, got {img.dtype} {img.shape}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        if not blob.startswith(b"P5"):
            raise ValueError("not a binary PGM (missing P5 magic)")
        # header: magic, width, height, maxval, separated by whitespace
        fields: list[bytes] = []
        pos = 2
        while len(fields) < 3:
            while pos < len(blob) and blob[pos : pos + 1].isspace():
                pos += 1
            if blob[pos : pos + 1] == b"#":  # comment line
                while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                    pos += 1
                continue
            start = pos
            while pos < len(blob) and not blob[pos : pos + 1].isspace():
                pos += 1
            fields.append(blob[start:pos])
        pos += 1  # single whitespace after maxval
        w, h, maxval = (int(f) for f in fields)
        if maxval != 255:
            raise ValueError(f"unsupported maxval {maxval}")
        data = np.frombuffer(blob[pos : pos + w * h], dtype=np.uint8)
        if data.size != w * h:
            raise ValueError(f"truncated pixel data ({data.size} of {w * h} bytes)")
        return data.reshape(h, w).copy()
    except ValueError as exc:
        raise ValueError(f"{path}: corrupt PGM: {exc}") from None
