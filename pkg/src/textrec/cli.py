"""Command-line surface: dataset generation, training, evaluation, gradient
checking, and attention/mask visualization.

Exit codes: 0 on success, 1 on validation errors (bad config, shape
mismatches, missing files), 2 on numeric failures (non-finite loss, gradient
check failure).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError
from .config import Config
from .data import CharsetCodec, load_dataset, make_dataset, read_pgm, write_pgm
from .gradcheck import check_model_gradients, gradcheck_passed
from .network import forward
from .tensor import Tensor
from .train import NumericError, evaluate, model_from_checkpoint, run_training

__all__ = ["main"]


def _load_config(path) -> Config:
    if path is None:
        return Config()
    return Config.load(path)


def cmd_generate(args) -> int:
    config = _load_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    manifest = make_dataset(
        args.out, seed=seed, count=config.num_samples,
        min_len=config.min_text_len, max_len=config.max_text_len,
        height=config.image_height, width=config.image_width,
        noise=config.noise_level, seq_len=config.seq_len,
    )
    print(f"wrote {config.num_samples} samples to {manifest.parent}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    samples = load_dataset(args.data, seq_len=config.seq_len)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    metrics_path = out_path.with_name(out_path.name + ".metrics.jsonl")
    if args.checkpoint is None and metrics_path.exists():
        metrics_path.unlink()  # fresh run, stale metrics would break step monotonicity
    result = run_training(
        config, samples, out_path=out_path, metrics_path=metrics_path,
        resume_path=args.checkpoint, log=lambda msg: print(msg, flush=True),
    )
    last = result["history"][-1] if result["history"] else {}
    print(json.dumps({"steps": result["steps_run"], "final": last}))
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    samples = load_dataset(args.data, seq_len=config.seq_len)
    model = model_from_checkpoint(config, args.checkpoint)
    report = evaluate(model, samples)
    print(json.dumps(report))
    return 0


def cmd_gradcheck(args) -> int:
    config = Config.tiny() if args.config is None else Config.load(args.config)
    seed = 0 if args.seed is None else args.seed
    rows = check_model_gradients(config, seed=seed)
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        status = "ok" if r["passed"] else "FAIL"
        print(f"{r['name']:<{width}}  max rel err {r['max_rel_err']:.3e}  {status}")
    if not gradcheck_passed(rows):
        print("gradient check FAILED", file=sys.stderr)
        return 2
    print(f"all {len(rows)} parameter groups pass")
    return 0


def _to_pgm_bytes(arr: np.ndarray) -> np.ndarray:
    lo, hi = float(arr.min()), float(arr.max())
    if hi - lo < 1e-12:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.round((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)


def cmd_visualize(args) -> int:
    config = _load_config(args.config)
    model = model_from_checkpoint(config, args.checkpoint)
    img = read_pgm(args.image).astype(np.float64) / 255.0
    if img.shape != (config.image_height, config.image_width):
        raise ValueError(
            f"image is {img.shape[0]}x{img.shape[1]} but config expects "
            f"{config.image_height}x{config.image_width}"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = forward(model, Tensor(img[None, None, :, :]))
    if result.mask is not None:
        write_pgm(out_dir / "mask.pgm", _to_pgm_bytes(result.mask.data[0, 0]))
    else:
        write_pgm(out_dir / "mask.pgm",
                  np.zeros((config.image_height // 4, config.image_width // 4), np.uint8))
    for t, trace in enumerate(result.traces):
        write_pgm(out_dir / f"attn_{t:02d}.pgm", _to_pgm_bytes(trace.attn.data[0, 0]))
    decoded = CharsetCodec().decode_prediction(result.predicted_indices()[0])
    print(decoded)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textrec",
        description="Scene-text recognizer: synthetic data, training, evaluation, "
                    "gradient checking, and attention visualization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, **flags):
        p = sub.add_parser(name, help=help_text)
        if flags.get("config", True):
            p.add_argument("--config", default=None, help="key=value config file")
        if flags.get("data"):
            p.add_argument("--data", required=True, help="dataset directory")
        if flags.get("out"):
            p.add_argument("--out", required=True, help="output path")
        if flags.get("seed", True):
            p.add_argument("--seed", type=int, default=None, help="overrides config seed")
        if flags.get("checkpoint"):
            p.add_argument("--checkpoint", required=flags["checkpoint"] == "required",
                           default=None, help="checkpoint path")
        if flags.get("image"):
            p.add_argument("--image", required=True, help="input PGM image")
        p.set_defaults(fn=fn)
        return p

    add("generate", cmd_generate, "render a synthetic dataset", out=True)
    add("train", cmd_train, "train from a dataset directory", data=True, out=True,
        checkpoint="optional")
    add("eval", cmd_eval, "evaluate a checkpoint on a dataset", data=True,
        checkpoint="required", seed=False)
    add("gradcheck", cmd_gradcheck, "verify analytic gradients against finite differences")
    add("visualize", cmd_visualize, "write mask and per-step attention maps as PGM files",
        out=True, checkpoint="required", image=True, seed=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, CheckpointError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
