"""
Ablation at desk scale
======================

Five head variants and a sweep over the number of bins, each trained briefly
on the same corpus. The table is written next to a TSV of the sweep so it can
be plotted. Short runs keep this to a few minutes, so read the numbers as a
smoke test of the harness rather than as a ranking.
"""

from pathlib import Path

from adabins.harness.ablate import ablate
from adabins.harness.config import load_config

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "ablate.cfg")
cfg = cfg.replace(train__steps=60, train__log_every=0)

report = ablate(cfg, out_dir=Path("ablation_out"))
print(report.to_table())
print()
print(report.sweep_series())
