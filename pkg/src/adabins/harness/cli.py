"""Command-line entry point: ``adabins <command> [options]``.

Exit status is 0 on success, 1 when a check or config validation fails and 2
for usage errors (bad flags, missing files).
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from ..errors import ConfigError, DomainError, UsageError
from ..io import FormatError, read_rgb, save_corpus, write_depth_map
from ..metrics import bin_histogram_export, evaluate, normals_from_depth
from .ablate import ablate
from .checkpoint import load_checkpoint
from .config import Config, load_config
from .gradsuite import run_suite
from .train import load_data, model_from_checkpoint, train

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

logger = logging.getLogger("adabins")


class _Usage(Exception):
    pass


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    return cfg


def _checkpoint(path) -> tuple:
    if not Path(path).is_file():
        raise _Usage(f"checkpoint not found: {path}")
    return model_from_checkpoint(load_checkpoint(path))


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.steps is not None:
        cfg.train.steps = args.steps
    cfg.validate()
    result = train(cfg, out_dir=args.out)
    if result.log:
        print(result.log[-1])
    print(f"checkpoint={result.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, cfg = _checkpoint(args.checkpoint)
    if args.config:
        cfg = load_config(args.config)
    corpus = load_data(cfg)
    report = evaluate(model, corpus.val or corpus.train, cfg.eval_protocol())
    print(report.to_table())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.txt").write_text(report.to_key_values() + "\n")
    return EXIT_OK


def _load_image(args, cfg: Config) -> np.ndarray:
    if (args.image is None) == (args.sample is None):
        raise _Usage("predict needs exactly one of --image or --sample")
    if args.sample is not None:
        samples = load_data(cfg).samples
        if not 0 <= args.sample < len(samples):
            raise _Usage(f"--sample must be in [0, {len(samples)})")
        return samples[args.sample].image
    path = Path(args.image)
    if not path.is_file():
        raise _Usage(f"image not found: {path}")
    if path.suffix == ".npy":
        img = np.load(path).astype(np.float32)
        if img.ndim == 3 and img.shape[-1] == 3 and img.shape[0] != 3:
            img = img.transpose(2, 0, 1)
        return img
    return read_rgb(path, cfg.data.height, cfg.data.width)


def cmd_predict(args) -> int:
    model, cfg = _checkpoint(args.checkpoint)
    image = _load_image(args, cfg)
    if image.shape != (3, *model.input_size):
        raise _Usage(f"image shape {image.shape} does not match the model input (3, {model.input_size[0]}, {model.input_size[1]})")
    depth = model.predict(image[None]).depth.data[0, 0].astype(np.float32)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_depth_map(out, depth)
    print(f"depth={out} min={float(depth.min())!r} max={float(depth.max())!r}")
    if args.normals:
        Path(args.normals).parent.mkdir(parents=True, exist_ok=True)
        np.save(args.normals, normals_from_depth(depth))
        print(f"normals={args.normals}")
    return EXIT_OK


def cmd_histogram(args) -> int:
    model, cfg = _checkpoint(args.checkpoint)
    samples = load_data(cfg).samples
    if not 0 <= args.sample < len(samples):
        raise _Usage(f"--sample must be in [0, {len(samples)})")
    s = samples[args.sample]
    pred = model.predict(s.image[None])
    if pred.centers is None:
        raise ConfigError("histogram export needs a model with bins")
    pair = bin_histogram_export(pred.centers.data[0], s.depth, s.mask, cfg.data.d_min, cfg.data.d_max, args.bins)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pair.write(out / "gt_hist.txt", out / "centers_hist.txt")
    print(f"gt={out / 'gt_hist.txt'} centers={out / 'centers_hist.txt'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    entries = run_suite(args.seed or 0, args.pipeline_seeds, emit=print)
    failed = [e for e in entries if not e.passed]
    print(f"{'PASS' if not failed else 'FAIL'} gradcheck: {len(entries) - len(failed)}/{len(entries)} checks passed")
    return EXIT_OK if not failed else EXIT_FAILED


def cmd_ablate(args) -> int:
    cfg = _config(args)
    report = ablate(cfg, out_dir=args.out)
    print(report.to_table())
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg.data.seed = args.seed
    cfg.corpus_config().validate()
    corpus = load_data(cfg.replace(data__path=None))
    manifest = save_corpus(corpus, args.out)
    print(f"manifest={manifest} train={len(corpus.train)} val={len(corpus.val)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adabins", description="Adaptive-bins depth estimation on synthetic scenes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, config=True, seed=True, out=None, checkpoint=False, out_metavar="DIR"):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", metavar="PATH", help="config file (section.key = value lines)")
        if seed:
            p.add_argument("--seed", type=int, metavar="U64")
        if out is not None:
            p.add_argument("--out", metavar=out_metavar, required=out is True, default=None if out is True else out)
        if checkpoint:
            p.add_argument("--checkpoint", metavar="PATH", required=True)
        p.set_defaults(func=fn)
        return p

    p = add("train", cmd_train, "train a model", out="runs/train")
    p.add_argument("--steps", type=int, help="override train.steps")
    add("eval", cmd_eval, "evaluate a checkpoint on the validation split", seed=False, out="", checkpoint=True)
    p = add("predict", cmd_predict, "predict depth for one image", seed=False, config=False, out=True, checkpoint=True, out_metavar="FILE")
    p.add_argument("--image", metavar="PATH", help=".npy array or raw interleaved 8-bit RGB at the model size")
    p.add_argument("--sample", type=int, help="index into the checkpoint's corpus (train then val)")
    p.add_argument("--normals", metavar="PATH", help="also write surface normals (.npy, h x w x 3)")
    p = add("histogram", cmd_histogram, "export GT and bin-center histograms", seed=False, config=False, out=True, checkpoint=True)
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--bins", type=int, default=50, help="histogram resolution")
    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient suite", config=False)
    p.add_argument("--pipeline-seeds", type=int, default=10)
    add("ablate", cmd_ablate, "run the ablation variants and the bin-count sweep", out="runs/ablate")
    add("gen-data", cmd_gen_data, "write the synthetic corpus to disk", out="data")
    return parser


@contextlib.contextmanager
def _thread_cap():
    raw = os.environ.get("ADABINS_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise _Usage(f"ADABINS_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise _Usage("ADABINS_THREADS must be ≥ 0")
    if n == 0:
        yield
    else:
        with threadpool_limits(limits=n):
            yield


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_cap():
            return args.func(args)
    except (_Usage, UsageError, OSError, FormatError) as exc:
        print(f"adabins {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DomainError) as exc:
        print(f"adabins {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
