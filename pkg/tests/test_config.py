import pytest

from textrec.config import Config


def test_defaults_follow_reference_setup():
    cfg = Config()
    assert cfg.image_height == 64 and cfg.image_width == 256
    assert cfg.seq_len == 20
    assert cfg.kernel_size == 3
    assert cfg.mask_loss_weight == 1.0
    assert cfg.shrink_ratio == 0.25
    assert cfg.label_smoothing == 0.1
    # five-stage staircase
    assert [lr for _, lr in cfg.lr_schedule] == [1e-4, 1e-4, 5e-5, 1e-5, 1e-6]


def test_load_round_trip(tmp_path):
    cfg = Config(image_height=32, image_width=64, seq_len=8, batch_size=4,
                 max_text_len=5, lr_schedule=((100, 1e-3), (50, 1e-4)))
    path = tmp_path / "run.cfg"
    path.write_text(cfg.dump())
    loaded = Config.load(path)
    assert loaded == cfg


def test_load_with_comments_and_blanks(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(
        "# a comment\n"
        "\n"
        "image_height=32  # trailing comment\n"
        "image_width=64\n"
        "seq_len=8\n"
        "max_text_len=5\n"
        "batch_size=2\n"
    )
    cfg = Config.load(path)
    assert cfg.image_height == 32
    assert cfg.batch_size == 2


def test_load_rejects_unknown_key(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("imaeg_height=32\n")
    with pytest.raises(ValueError, match="unknown key"):
        Config.load(path)


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("image_height=64\nbatch_size=notanumber\n")
    with pytest.raises(ValueError, match=":2:"):
        Config.load(path)


def test_validation_rules():
    with pytest.raises(ValueError, match="divisible by 8"):
        Config(image_height=30)
    with pytest.raises(ValueError, match="odd"):
        Config(kernel_size=4)
    with pytest.raises(ValueError, match="positive"):
        Config(batch_size=0)
    with pytest.raises(ValueError, match="seq_len"):
        Config(seq_len=4, max_text_len=5)
    with pytest.raises(ValueError):
        Config(lr_schedule=())
    with pytest.raises(ValueError):
        Config(shrink_ratio=0.0)


def test_lr_staircase():
    cfg = Config(lr_schedule=((2, 1e-3), (3, 1e-4)))
    assert cfg.total_steps == 5
    assert [cfg.lr_at(s) for s in range(6)] == [1e-3, 1e-3, 1e-4, 1e-4, 1e-4, 1e-4]


def test_tiny_config_geometry():
    cfg = Config.tiny()
    assert (cfg.image_height, cfg.image_width) == (16, 32)
    assert cfg.seq_len == 3
    assert cfg.cell_channels == 8


def test_bool_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("uniform_attention=true\nmask_branch=0\nmax_text_len=5\n"
                    "image_height=32\nimage_width=64\nseq_len=8\n")
    cfg = Config.load(path)
    assert cfg.uniform_attention is True
    assert cfg.mask_branch is False
