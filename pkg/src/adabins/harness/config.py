"""Line-based ``section.key = value`` configuration.

Blank lines and ``#`` comments are ignored; unknown sections or keys are errors.
Tuple values are comma-separated; ``none`` clears an optional value.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..backbone import BackboneConfig
from ..errors import ConfigError
from ..head import MiniViTConfig
from ..losses import LossConfig
from ..metrics import EvalProtocol
from ..synthdata import CorpusConfig


@dataclass
class DataSection:
    n_samples: int = 64
    height: int = 32
    width: int = 32
    seed: int = 0
    scene_mix: tuple = (0.5, 0.5, 0.0)
    invalid_fraction: float = 0.0
    d_min: float = 0.1
    d_max: float = 10.0
    path: Optional[str] = None


@dataclass
class ModelSection:
    stages: int = 3
    base_channels: int = 16
    decoded_channels: int = 128
    patch_size: int = 2
    embed_dim: int = 32
    layers: int = 2
    heads: int = 4
    kernel_count: int = 32
    mlp_hidden: int = 128
    n_bins: int = 64
    head_hidden: int = 256
    regression: str = "hybrid"


@dataclass
class BinsSection:
    kind: str = "adaptive"
    d_low: Optional[float] = None


@dataclass
class LossSection:
    kind: str = "si+bins"
    lam: float = 0.85
    alpha: float = 10.0
    beta: float = 0.1
    chamfer_sample_cap: int = 1024
    ssim_weight: float = 0.85


@dataclass
class OptimSection:
    max_lr: float = 3.5e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_fraction: float = 0.3
    start_div: float = 25.0
    end_div: float = 75.0


@dataclass
class TrainSection:
    steps: int = 1000
    batch_size: int = 4
    seed: int = 0
    log_every: int = 1
    val_every: int = 0
    ckpt_every: int = 0


@dataclass
class EvalSection:
    crop: Optional[tuple] = None
    crop_frac: Optional[tuple] = None
    mirror_average: bool = True


@dataclass
class AblateSection:
    variants: tuple = ("base+r", "uniform_fix", "log_fix", "train_fix", "adaptive")
    n_sweep: tuple = (2, 8, 32, 64, 128)
    losses: tuple = ()


# config keys that differ from attribute names
_ALIASES = {("loss", "lambda"): "lam"}


@dataclass
class Config:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    bins: BinsSection = field(default_factory=BinsSection)
    loss: LossSection = field(default_factory=LossSection)
    optim: OptimSection = field(default_factory=OptimSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    ablate: AblateSection = field(default_factory=AblateSection)

    # -- typed views ------------------------------------------------------
    def corpus_config(self) -> CorpusConfig:
        d = self.data
        return CorpusConfig(d.n_samples, d.height, d.width, d.seed, tuple(d.scene_mix), d.invalid_fraction, d.d_min, d.d_max)

    def backbone_config(self) -> BackboneConfig:
        m = self.model
        return BackboneConfig(m.stages, m.base_channels, m.decoded_channels, (self.data.height, self.data.width))

    def vit_config(self) -> MiniViTConfig:
        m = self.model
        return MiniViTConfig(m.patch_size, m.embed_dim, m.layers, m.heads, m.kernel_count, m.mlp_hidden, m.n_bins, m.head_hidden)

    def loss_config(self) -> LossConfig:
        l = self.loss
        return LossConfig(l.lam, l.alpha, l.beta, l.chamfer_sample_cap, l.kind)

    def eval_protocol(self) -> EvalProtocol:
        e = self.eval
        crop = tuple(int(v) for v in e.crop) if e.crop else None
        frac = tuple(float(v) for v in e.crop_frac) if e.crop_frac else None
        return EvalProtocol(crop, frac, e.mirror_average, (self.data.d_min, self.data.d_max))

    def validate(self) -> "Config":
        self.corpus_config().validate()
        self.backbone_config().validate()
        self.vit_config().validate()
        self.loss_config().validate()
        if self.train.steps < 1 or self.train.batch_size < 1:
            raise ConfigError("train.steps and train.batch_size must be ≥ 1")
        if self.model.regression == "hybrid":
            h, w = self.backbone_config().feature_size
            S = self.vit_config().sequence_length(h, w)
            if S < self.model.kernel_count + 1:
                raise ConfigError(f"sequence length {S} < model.kernel_count + 1")
        o = self.optim
        if not 0 < o.warmup_fraction < 1 or o.max_lr <= 0:
            raise ConfigError("need 0 < optim.warmup_fraction < 1 and optim.max_lr > 0")
        return self

    def replace(self, **updates) -> "Config":
        """Copy with ``section__key=value`` overrides."""
        new = dataclasses.replace(self, **{f.name: dataclasses.replace(getattr(self, f.name)) for f in fields(self)})
        for k, v in updates.items():
            section, key = k.split("__")
            setattr(getattr(new, section), key, v)
        return new

    # -- text form --------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        reverse = {(s, attr): key for (s, key), attr in _ALIASES.items()}
        for sec in fields(self):
            obj = getattr(self, sec.name)
            for f in fields(obj):
                key = reverse.get((sec.name, f.name), f.name)
                lines.append(f"{sec.name}.{key} = {_format(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_format(v) for v in value)
    return str(value)


def _convert(raw: str, hint, where: str):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if raw.lower() == "none":
            return None
        return _convert(raw, args[0], where)
    try:
        if hint is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw
        if hint is tuple or origin is tuple:
            if raw.strip() == "":
                return ()
            return tuple(_scalar(p.strip()) for p in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {getattr(hint, '__name__', hint)}") from exc
    raise ConfigError(f"{where}: unsupported type {hint}")


def _scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(text: str, base: Optional[Config] = None) -> Config:
    cfg = base.replace() if base is not None else Config()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        lhs, value = (s.strip() for s in line.split("=", 1))
        if "." not in lhs:
            raise ConfigError(f"line {lineno}: key {lhs!r} lacks a section")
        section, key = lhs.split(".", 1)
        if section not in {f.name for f in fields(cfg)}:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        obj = getattr(cfg, section)
        attr = _ALIASES.get((section, key), key)
        hints = typing.get_type_hints(type(obj))
        if attr not in hints:
            raise ConfigError(f"line {lineno}: unknown key {section}.{key}")
        setattr(obj, attr, _convert(value, hints[attr], f"line {lineno} ({section}.{key})"))
    return cfg


def load_config(path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text())
