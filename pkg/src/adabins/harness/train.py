"""Training loop, model construction and corpus loading."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..io import load_corpus
from ..losses import l1_ssim_loss, total_loss
from ..metrics import EvalProtocol, MetricReport, evaluate
from ..model import DepthModel
from ..synthdata import Corpus, make_corpus
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import Config
from .optim import LRSchedule, OptimizerState, adamw_step, lr_at

logger = logging.getLogger(__name__)


def build_model(cfg: Config) -> DepthModel:
    return DepthModel(
        cfg.backbone_config(),
        cfg.vit_config(),
        cfg.data.d_min,
        cfg.data.d_max,
        bins_kind=cfg.bins.kind,
        regression=cfg.model.regression,
        seed=cfg.train.seed,
        d_low=cfg.bins.d_low,
    )


def load_data(cfg: Config) -> Corpus:
    if cfg.data.path:
        return load_corpus(cfg.data.path, cfg.data.d_min, cfg.data.d_max)
    return make_corpus(cfg.corpus_config())


def schedule_for(cfg: Config) -> LRSchedule:
    o = cfg.optim
    return LRSchedule(cfg.train.steps, o.max_lr, o.warmup_fraction, o.start_div, o.end_div)


def compute_loss(model: DepthModel, cfg: Config, images, depth, mask, seeds):
    """Forward a batch and return (loss tensor, component dict)."""
    pred, _, centers = model.forward(images)
    mask4 = mask[:, None]
    gt4 = depth[:, None]
    if cfg.loss.kind == "l1ssim":
        loss = l1_ssim_loss(pred, gt4, mask4, cfg.loss.ssim_weight, cfg.data.d_max)
        return loss, {"pixel": float(loss.data), "bins": 0.0}
    lcfg = cfg.loss_config()
    if cfg.loss.kind == "si":
        lcfg.beta = 0.0
    return total_loss(pred, gt4, mask4, centers, lcfg, seeds)


@dataclass
class TrainResult:
    model: DepthModel
    optimizer: OptimizerState
    log: list = field(default_factory=list)
    checkpoint_path: Optional[Path] = None
    step: int = 0
    stream: Optional["_BatchStream"] = None


class _BatchStream:
    """Epoch-wise shuffled indices from a seeded generator; batches may span epochs."""

    def __init__(self, n: int, seed: int):
        self.n = n
        self.rng = np.random.default_rng(seed)
        self.epoch = 0
        self.perm = self.rng.permutation(n).tolist()
        self.cursor = 0

    def next(self, batch_size: int) -> list[tuple[int, int]]:
        out = []
        for _ in range(min(batch_size, self.n)):
            if self.cursor >= self.n:
                self.epoch += 1
                self.perm = self.rng.permutation(self.n).tolist()
                self.cursor = 0
            out.append((self.epoch, self.perm[self.cursor]))
            self.cursor += 1
        return out


def _format_record(**values) -> str:
    return " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items())


def train(
    cfg: Config,
    out_dir=None,
    corpus: Optional[Corpus] = None,
    resume: Optional[Checkpoint] = None,
    stop_at: Optional[int] = None,
) -> TrainResult:
    """Train ``cfg.train.steps`` steps (or up to ``stop_at``), optionally resuming.

    Writes ``train.log`` (append-only key=value records) and ``checkpoint.adbc``
    to ``out_dir`` when given.
    """
    cfg.validate()
    corpus = corpus if corpus is not None else load_data(cfg)
    if not corpus.train:
        raise ConfigError("training split is empty")
    model = build_model(cfg)
    t = cfg.train
    opt = OptimizerState(cfg.optim.weight_decay, (cfg.optim.beta1, cfg.optim.beta2), cfg.optim.eps)
    stream = _BatchStream(len(corpus.train), t.seed)
    step = 0
    if resume is not None:
        model.load_state_dict(resume.params)
        opt = resume.optimizer
        step = resume.step
        stream.rng.bit_generator.state = resume.rng_state
        stream.epoch, stream.cursor, stream.perm = resume.epoch, resume.cursor, list(resume.perm)
    schedule = schedule_for(cfg)
    end = t.steps if stop_at is None else min(stop_at, t.steps)

    out = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_file = open(out / "train.log", "a")
    result = TrainResult(model, opt)
    named = list(model.named_parameters())
    images_all = np.stack([s.image for s in corpus.train])
    depth_all = np.stack([s.depth for s in corpus.train])
    mask_all = np.stack([s.mask for s in corpus.train])

    def emit(line: str) -> None:
        result.log.append(line)
        if log_file is not None:
            log_file.write(line + "\n")
            log_file.flush()
        logger.debug(line)

    try:
        while step < end:
            picks = stream.next(t.batch_size)
            idx = [i for _, i in picks]
            seeds = [(t.seed, e, i) for e, i in picks]
            lr = lr_at(step, schedule)
            model.zero_grad()
            loss, parts = compute_loss(model, cfg, images_all[idx], depth_all[idx], mask_all[idx], seeds)
            loss.backward()
            adamw_step(named, opt, lr)
            step += 1
            if t.log_every and (step % t.log_every == 0 or step == end):
                emit(_format_record(step=step, lr=lr, loss=float(loss.data), pixel=parts["pixel"], bins=parts["bins"]))
            if t.val_every and step % t.val_every == 0 and corpus.val:
                rep = evaluate(model, corpus.val, EvalProtocol(mirror_average=False))
                emit(f"val step={step} " + " ".join(f"{k}={v!r}" for k, v in rep.as_dict().items()))
            if out is not None and t.ckpt_every and step % t.ckpt_every == 0:
                save_checkpoint(out / f"checkpoint_{step:06d}.adbc", _snapshot(cfg, model, opt, step, stream))
    finally:
        if log_file is not None:
            log_file.close()
    result.step = step
    if out is not None:
        result.checkpoint_path = save_checkpoint(out / "checkpoint.adbc", _snapshot(cfg, model, opt, step, stream))
    result.stream = stream
    return result


def _snapshot(cfg, model, opt, step, stream) -> Checkpoint:
    return Checkpoint(
        config=cfg,
        params=model.state_dict(),
        optimizer=OptimizerState(
            opt.weight_decay, opt.betas, opt.eps, opt.step,
            {k: v.copy() for k, v in opt.m.items()}, {k: v.copy() for k, v in opt.v.items()},
        ),
        step=step,
        epoch=stream.epoch,
        cursor=stream.cursor,
        perm=list(stream.perm),
        rng_state=stream.rng.bit_generator.state,
    )


def snapshot(result: TrainResult, cfg: Config) -> Checkpoint:
    return _snapshot(cfg, result.model, result.optimizer, result.step, result.stream)


def model_from_checkpoint(path_or_ckpt) -> tuple[DepthModel, Config]:
    ckpt = path_or_ckpt if isinstance(path_or_ckpt, Checkpoint) else load_checkpoint(path_or_ckpt)
    model = build_model(ckpt.config)
    model.load_state_dict(ckpt.params)
    return model, ckpt.config


def train_and_evaluate(cfg: Config, corpus: Optional[Corpus] = None, protocol: Optional[EvalProtocol] = None):
    """Train then evaluate on the validation split. Returns (TrainResult, MetricReport)."""
    corpus = corpus if corpus is not None else load_data(cfg)
    result = train(cfg, corpus=corpus)
    report: MetricReport = evaluate(result.model, corpus.val or corpus.train, protocol or cfg.eval_protocol())
    return result, report
