"""Ablation runner: bin-width strategies, regression kind, bin count and loss.

Every variant is trained from the same seed on the same corpus and evaluated
on the validation split. Results come back as an :class:`AblationReport`
that renders a comparative table and the bin-count series.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..losses import chamfer_1d
from ..metrics import METRIC_NAMES, MetricReport, evaluate
from ..synthdata import Corpus
from .config import Config
from .train import load_data, train

logger = logging.getLogger(__name__)

# short key -> (row name, bins kind, regression)
VARIANTS = {
    "base+r": ("Base+R", "uniform_fix", "direct"),
    "uniform_fix": ("Base+Uniform-Fix-HR", "uniform_fix", "hybrid"),
    "log_fix": ("Base+Log-Fix-HR", "log_fix", "hybrid"),
    "train_fix": ("Base+Train-Fix-HR", "train_fix", "hybrid"),
    "adaptive": ("Base+AdaBins-HR", "adaptive", "hybrid"),
}

_COLUMNS = ("delta1", "delta2", "delta3", "rel", "rms", "log10", "chamfer")


@dataclass
class AblationRow:
    name: str
    bins_kind: str
    regression: str
    n_bins: int
    loss_kind: str
    report: MetricReport
    chamfer: Optional[float] = None
    final_loss: float = float("nan")

    def values(self) -> dict:
        out = {k: getattr(self.report, k) for k in METRIC_NAMES}
        out["chamfer"] = self.chamfer
        return out


@dataclass
class AblationReport:
    rows: list = field(default_factory=list)
    sweep: list = field(default_factory=list)

    def to_table(self) -> str:
        lines = []
        sections = (("variants", self.rows, _label), ("bin-count sweep (Base+AdaBins-HR)", self.sweep, _n_label))
        for title, rows, label in sections:
            if not rows:
                continue
            width = max(len(label(r)) for r in rows) + 2
            lines.append(f"# {title}")
            lines.append("variant".ljust(width) + "".join(c.rjust(10) for c in _COLUMNS))
            for r in rows:
                vals = r.values()
                cells = ["-".rjust(10) if vals[c] is None else f"{vals[c]:10.4f}" for c in _COLUMNS]
                lines.append(label(r).ljust(width) + "".join(cells))
            lines.append("")
        return "\n".join(lines)

    def sweep_series(self) -> str:
        """Tab-separated series, one row per bin count in increasing order."""
        head = "index\tn_bins\t" + "\t".join(_COLUMNS)
        body = []
        for i, r in enumerate(sorted(self.sweep, key=lambda r: r.n_bins)):
            vals = r.values()
            body.append(f"{i}\t{r.n_bins}\t" + "\t".join(repr(vals[c]) for c in _COLUMNS))
        return "\n".join([head] + body) + "\n"

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"table": out / "ablation_table.txt"}
        paths["table"].write_text(self.to_table())
        if self.sweep:
            paths["series"] = out / "n_sweep.tsv"
            paths["series"].write_text(self.sweep_series())
        return paths


def _label(row: AblationRow) -> str:
    label = row.name
    if row.loss_kind != "si+bins":
        label += f" [{row.loss_kind}]"
    return label


def _n_label(row: AblationRow) -> str:
    return f"N={row.n_bins}"


def mean_bin_chamfer(model, samples) -> float:
    """Mean over images of the two-sided Chamfer distance between predicted
    bin centers and that image's valid ground-truth depths."""
    images = np.stack([s.image for s in samples])
    _, _, centers = model.forward(images)
    dists = [float(chamfer_1d(s.depth[s.mask], centers.data[i]).data) for i, s in enumerate(samples)]
    return float(np.mean(dists))


def run_variant(cfg: Config, corpus: Corpus, key: str, n_bins: Optional[int] = None, loss_kind: Optional[str] = None) -> AblationRow:
    if key not in VARIANTS:
        raise ConfigError(f"unknown ablation variant {key!r}; choose from {sorted(VARIANTS)}")
    name, kind, regression = VARIANTS[key]
    n_bins = cfg.model.n_bins if n_bins is None else n_bins
    loss_kind = cfg.loss.kind if loss_kind is None else loss_kind
    if regression == "direct" and loss_kind == "si+bins":
        loss_kind = "si"  # no bins to supervise
    vcfg = cfg.replace(bins__kind=kind, model__regression=regression, model__n_bins=n_bins, loss__kind=loss_kind)
    vcfg.validate()
    logger.info("ablation: %s N=%d loss=%s", name, n_bins, loss_kind)
    result = train(vcfg, corpus=corpus)
    held_out = corpus.val or corpus.train
    report = evaluate(result.model, held_out, vcfg.eval_protocol())
    chamfer = mean_bin_chamfer(result.model, held_out) if regression == "hybrid" else None
    final = float(result.log[-1].split("loss=")[1].split()[0]) if result.log else float("nan")
    return AblationRow(name, kind, regression, n_bins, loss_kind, report, chamfer, final)


def ablate(cfg: Config, corpus: Optional[Corpus] = None, out_dir=None) -> AblationReport:
    """Train and evaluate ``cfg.ablate.variants``, the extra loss kinds and the
    bin-count sweep, all from ``cfg.train.seed`` on one shared corpus."""
    cfg.validate()
    corpus = corpus if corpus is not None else load_data(cfg)
    report = AblationReport()
    for key in cfg.ablate.variants:
        report.rows.append(run_variant(cfg, corpus, str(key)))
    for loss_kind in cfg.ablate.losses:
        report.rows.append(run_variant(cfg, corpus, "adaptive", loss_kind=str(loss_kind)))
    for n in sorted(int(n) for n in cfg.ablate.n_sweep):
        report.sweep.append(run_variant(cfg, corpus, "adaptive", n_bins=n))
    if out_dir is not None:
        report.write(out_dir)
    return report
