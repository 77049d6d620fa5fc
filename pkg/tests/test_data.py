import json

import numpy as np
import pytest

from textrec.data import (
    CharsetCodec,
    load_dataset,
    make_dataset,
    read_pgm,
    render_sample,
    write_pgm,
)
from textrec.glyphs import GLYPHS, glyph_bitmap
from textrec.losses import rasterize_masks


# --- codec --------------------------------------------------------------------

def test_charset_layout():
    codec = CharsetCodec()
    assert codec.char_index("a") == 0
    assert codec.char_index("z") == 25
    assert codec.char_index("0") == 26
    assert codec.char_index("9") == 35
    assert codec.START == 36 and codec.EOS == 37 and codec.OTHER == 38
    assert codec.SIZE == 39


def test_encode_target_example():
    codec = CharsetCodec()
    out = codec.encode_target("ab1", 20)
    expected = [36, 0, 1, 27] + [37] * 16
    assert out.tolist() == expected


def test_encode_target_empty_word():
    assert CharsetCodec().encode_target("", 4).tolist() == [36, 37, 37, 37]


def test_encode_target_casefold_and_other():
    codec = CharsetCodec()
    out = codec.encode_target("A-b", 6)
    assert out.tolist() == [36, 0, 38, 1, 37, 37]


def test_encode_target_rejects_overlong():
    with pytest.raises(ValueError):
        CharsetCodec().encode_target("abcd", 5)


def test_decode_prediction_rules():
    codec = CharsetCodec()
    assert codec.decode_prediction([37] * 8) == ""
    assert codec.decode_prediction([36, 0, 1, 38, 2, 37, 5]) == "abc"
    # no EOS anywhere: everything after the START decodes
    full = [36] + list(range(19))
    assert len(codec.decode_prediction(full)) == 19


def test_encode_decode_round_trip_500_random_strings():
    codec = CharsetCodec()
    rng = np.random.default_rng(123)
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789"
    for _ in range(500):
        n = int(rng.integers(0, 19))
        text = "".join(alphabet[int(i)] for i in rng.integers(0, 36, size=n))
        assert codec.decode_prediction(codec.encode_target(text, 20)) == text


# --- glyphs ---------------------------------------------------------------------

def test_every_glyph_fills_its_cell_bounds():
    # layout math relies on tight ink boxes spanning the whole 5x7 cell
    for ch in GLYPHS:
        bmp = glyph_bitmap(ch)
        assert bmp.shape == (7, 5)
        assert bmp[0].any() and bmp[6].any()
        assert bmp[:, 0].any() and bmp[:, 4].any()


def test_glyphs_are_distinct():
    flat = {ch: tuple(glyph_bitmap(ch).ravel()) for ch in GLYPHS}
    assert len(set(flat.values())) == len(GLYPHS)


# --- rendering ---------------------------------------------------------------

def test_render_deterministic_per_seed():
    a = render_sample(42, "ab1", height=32, width=64, noise=0.1)
    b = render_sample(42, "ab1", height=32, width=64, noise=0.1)
    assert np.array_equal(a.image.data, b.image.data)
    assert a.boxes == b.boxes
    c = render_sample(43, "ab1", height=32, width=64, noise=0.1)
    assert not np.array_equal(a.image.data, c.image.data)


def test_render_noise_free_glyph_matches_table():
    sample = render_sample(7, "a", height=32, width=64, noise=0.0)
    (x0, y0, x1, y1) = sample.boxes[0]
    s = (x1 - x0) // 5
    patch = sample.image.data[0, 0, y0:y1, x0:x1]
    expected = np.kron(glyph_bitmap("a"), np.ones((s, s)))
    assert np.array_equal(patch, expected)
    # nothing outside the box
    total = sample.image.data.sum()
    assert total == expected.sum()


def test_render_box_count_and_bounds():
    sample = render_sample(3, "hello", height=32, width=64, noise=0.05)
    assert len(sample.boxes) == 5
    for (x0, y0, x1, y1) in sample.boxes:
        assert 0 <= x0 < x1 <= 64
        assert 0 <= y0 < y1 <= 32
    assert sample.image.data.min() >= 0.0 and sample.image.data.max() <= 1.0


def test_render_rejects_oversized_text():
    with pytest.raises(ValueError):
        render_sample(0, "abcdefgh", height=32, width=64)


def test_render_rejects_unrenderable_chars():
    with pytest.raises(ValueError):
        render_sample(0, "a-b", height=32, width=64)


def test_every_box_leaves_mask_foreground():
    # the layout alignment must guarantee quarter-res coverage per character
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        text = "".join("abcdefghijklmnopqrstuvwxyz0123456789"[int(i)]
                       for i in rng.integers(0, 36, size=n))
        sample = render_sample(seed, text, height=32, width=64, noise=0.02)
        for box in sample.boxes:
            mask = rasterize_masks([box], 32, 64)
            assert mask.sum() >= 1, f"seed {seed} text {text!r} box {box}"


# --- pgm ------------------------------------------------------------------------

def test_pgm_round_trip(tmp_path):
    img = (np.arange(48).reshape(6, 8) * 5).astype(np.uint8)
    path = tmp_path / "x.pgm"
    write_pgm(path, img)
    assert np.array_equal(read_pgm(path), img)


def test_read_pgm_corrupt_reports_file(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P5\n4 4\n255\nxy")  # truncated pixels
    with pytest.raises(ValueError, match="bad.pgm"):
        read_pgm(path)
    path2 = tmp_path / "notpgm.pgm"
    path2.write_bytes(b"hello")
    with pytest.raises(ValueError, match="notpgm.pgm"):
        read_pgm(path2)


# --- dataset files ----------------------------------------------------------------

def test_dataset_write_read_round_trip(tmp_path):
    out = tmp_path / "ds"
    make_dataset(out, seed=5, count=10, min_len=3, max_len=5, height=32, width=64,
                 noise=0.05)
    samples = load_dataset(out, seq_len=20)
    assert len(samples) == 10
    for s in samples:
        assert 3 <= len(s.text) <= 5
        assert len(s.boxes) == len(s.text)
        assert s.target[0] == CharsetCodec.START


def test_dataset_bytes_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    make_dataset(a, seed=9, count=4, height=32, width=64)
    make_dataset(b, seed=9, count=4, height=32, width=64)
    assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()
    for i in range(4):
        assert (a / f"images/{i:05d}.pgm").read_bytes() == (b / f"images/{i:05d}.pgm").read_bytes()


def test_dataset_in_memory_matches_loaded(tmp_path):
    out = tmp_path / "ds"
    make_dataset(out, seed=1, count=3, height=32, width=64, noise=0.1)
    loaded = load_dataset(out)
    raw = [json.loads(line) for line in (out / "manifest.jsonl").read_text().splitlines()]
    for s, rec in zip(loaded, raw):
        assert s.text == rec["text"]
        assert [list(b) for b in s.boxes] == rec["boxes"]
        img = read_pgm(out / rec["image"]).astype(np.float64) / 255.0
        assert np.array_equal(s.image.data[0, 0], img)


def test_empty_dataset_loads_empty(tmp_path):
    out = tmp_path / "ds"
    make_dataset(out, seed=0, count=0)
    assert load_dataset(out) == []


def test_malformed_manifest_reports_line_number(tmp_path):
    out = tmp_path / "ds"
    make_dataset(out, seed=0, count=1, height=32, width=64)
    manifest = out / "manifest.jsonl"
    manifest.write_text(manifest.read_text() + "{not json\n")
    with pytest.raises(ValueError, match=":2:"):
        load_dataset(out)


def test_corrupt_image_file_names_file(tmp_path):
    out = tmp_path / "ds"
    make_dataset(out, seed=0, count=1, height=32, width=64)
    img_path = out / "images/00000.pgm"
    img_path.write_bytes(b"P5\n64 32\n255\nshort")
    with pytest.raises(ValueError, match="00000.pgm"):
        load_dataset(out)


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope")
