"""
Checking every gradient
=======================

Each differentiable operation, and then the whole model on a 16x16 input,
is compared against central finite differences in float64. Probes that would
straddle a kink (a ReLU switching sign, a nearest-neighbour choice changing)
are redrawn, and the count of such redraws is reported.
"""

from adabins.harness.gradsuite import run_suite

entries = run_suite(seed=0, pipeline_seeds=3, emit=print)
print(sum(e.passed for e in entries), "of", len(entries), "checks passed")
