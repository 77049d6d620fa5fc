import numpy as np
import pytest

from textrec.checkpoint import CheckpointError, MAGIC, load_tensors, save_tensors


def test_round_trip_is_bitwise(tmp_path, rng):
    tensors = {
        "enc.s1.w": rng.standard_normal((4, 1, 3, 3)),
        "cell.bias_f2": rng.standard_normal(8),
        "head.fc.w": rng.standard_normal((12, 39)),
        "opt.t": np.asarray(17.0),
    }
    path = tmp_path / "model.ckpt"
    save_tensors(path, tensors)
    loaded = load_tensors(path)
    assert list(loaded) == list(tensors)
    for name in tensors:
        got, want = loaded[name], np.asarray(tensors[name], dtype=np.float64)
        assert got.shape == want.shape
        assert got.tobytes() == want.tobytes()


def test_save_load_save_identical_bytes(tmp_path, rng):
    tensors = {"a": rng.standard_normal((3, 5)), "b": rng.standard_normal(2)}
    p1, p2 = tmp_path / "one.ckpt", tmp_path / "two.ckpt"
    save_tensors(p1, tensors)
    save_tensors(p2, load_tensors(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_and_crc_present(tmp_path):
    path = tmp_path / "m.ckpt"
    save_tensors(path, {"x": np.zeros(3)})
    assert path.read_bytes()[:4] == MAGIC


def test_corrupted_payload_detected(tmp_path, rng):
    path = tmp_path / "c.ckpt"
    save_tensors(path, {"x": rng.standard_normal((2, 2))})
    blob = bytearray(path.read_bytes())
    blob[20] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        load_tensors(path)


def test_bad_magic_detected(tmp_path):
    path = tmp_path / "b.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_tensors(path)


def test_truncated_file_detected(tmp_path, rng):
    path = tmp_path / "t.ckpt"
    save_tensors(path, {"x": rng.standard_normal(8)})
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError):
        load_tensors(path)


def test_rank_zero_scalar_round_trip(tmp_path):
    path = tmp_path / "s.ckpt"
    save_tensors(path, {"step": np.asarray(123.0)})
    out = load_tensors(path)
    assert out["step"].shape == ()
    assert float(out["step"]) == 123.0
