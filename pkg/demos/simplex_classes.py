"""
Class-probability vectors on the simplex
========================================

Responses are class-probability vectors from some classifier, so they live
on the 2-simplex.  Covariates are 5-dimensional and the cells come from
CD-split: covariates are grouped by the estimated conditional density
quantile of a pilot model.  The class band reports how much of the set falls
in each argmax region.
"""

import numpy as np

from mconf import experiments as ex

rng = np.random.default_rng(3)
n = 600
x = rng.uniform(40, 200, (n, 5))
# a bus-like region of covariate space gets confident class-0 vectors
bus = (x[:, 3] > 120)[:, None] * np.array([4.0, 0.0, 1.5])
z = bus + rng.normal(0, 0.5, (n, 3))
probs = np.exp(z - z.max(axis=1, keepdims=True))
probs /= probs.sum(axis=1, keepdims=True)

out = ex.simplex_run(probs, x, seed=3, alphas=(0.1, 0.05), query_x=(84, 45, 66, 150, 65))
print("CD-split cells:", out["partition"].n_cells)
for a in (0.1, 0.05):
    band = out["bands"][a]
    print("alpha=%.2f  set fraction %.3f  class shares %s  class set %s"
          % (a, out["sets"][a].fraction, np.round(band.fractions, 3), band.class_set))

# the two sets share one partition, so the 90% set sits inside the 95% one
s10, s05 = out["sets"][0.1].in_set, out["sets"][0.05].in_set
print("nested:", not np.any(s10 & ~s05))
