"""
Hard versus soft depth readout
==============================

Given per-pixel bin probabilities, depth can be read out in two ways. Taking
the center of the most likely bin gives a staircase with at most N levels.
Taking the probability-weighted sum of centers gives a continuous map. This
demo shows the difference on a small trained model.
"""

import numpy as np

from adabins.harness.config import Config
from adabins.harness.train import load_data, train
from adabins.head import argmax_regress
from adabins.metrics import total_variation

cfg = Config().replace(data__n_samples=16, train__steps=200, train__log_every=0, model__n_bins=16)
corpus = load_data(cfg)
model = train(cfg, corpus=corpus).model

sample = next(s for s in corpus.val if s.scene_type == "corridor")
pred = model.predict(sample.image[None])
soft = pred.depth_half.data[0, 0]
hard = argmax_regress(pred.logits, pred.centers)[0, 0]

print("bins:", cfg.model.n_bins)
print("distinct values, argmax readout:  ", len(np.unique(hard)))
print("distinct values, weighted readout:", len(np.unique(soft)))
print(f"neighbour difference, argmax:   {total_variation(hard):.3f}")
print(f"neighbour difference, weighted: {total_variation(soft):.3f}")

# One row through the middle of the corridor makes the staircase visible.
row = soft.shape[0] // 2
print("argmax row:  ", np.round(hard[row], 2))
print("weighted row:", np.round(soft[row], 2))
