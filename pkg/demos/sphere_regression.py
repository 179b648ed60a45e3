"""
Prediction sets on the sphere
=============================

Responses are von Mises-Fisher draws on S^2 whose mean direction turns with a
scalar covariate.  We fit the cell-wise conformal model, look at the set for
x = 0 and compare it with the population highest-density cap.
"""

import numpy as np

from mconf import experiments as ex
from mconf import geometry as geo
from mconf.conformal import predict_set_fast

model = ex.SphereRegressionModel()  # kappa=200, n=400, h=0.5, four cells on [-1, 1]
run = ex.sphere_run(seed=1, model=model, alpha=0.1, x_query=0.0)

pset = run["set"]
print("query cell:", pset.cell, "box:", model.partition().cell_box(pset.cell))
print("fraction of the candidate grid in the set: %.4f" % pset.fraction)

# the population set is a cap around the mean direction (1, 0, 0)
c = ex.vmf_cap_cosine(model.kappa, 0.1)
print("oracle cap: mu.y >= %.6f, area %.4f" % (c, 2 * np.pi * (1 - c)))
cmp_ = run["comparison"]
print("estimated area %.4f, symmetric difference %.4f, Jaccard %.3f"
      % (cmp_["volume_a"], cmp_["sym_diff"], cmp_["jaccard"]))

# x = 0 sits on a cell boundary, so the set pools responses from [-0.5, 0]
# and is wider than the cap.  Held-out coverage is still at the nominal level.
cov = run["coverage"]
print("held-out coverage %.3f, per cell %s" % (cov.overall, np.round(cov.per_cell, 3)))

# The threshold set is cheaper and always contains the exact one.
fast = predict_set_fast(run["model"], 0.0, 0.1, pset.candidates)
print("fast set fraction %.4f, contains exact set: %s"
      % (fast.fraction, bool(np.all(fast.in_set[pset.in_set]))))

# A finer partition with a shrinking bandwidth tracks the oracle better as n
# grows.  One seed is noisy; medians over many seeds decrease steadily.
from mconf.conformal import conformity_rank, fit
from mconf.density import BandwidthRule
from mconf.partition import cube_partition

cap = model.oracle_cap(0.0, 0.1)
for n in (100, 400, 1600):
    x, y = ex.gen_sphere(model, n, ex.substream(1, "n%d" % n))
    cm = fit(x, y, cube_partition(x, bounds=[(-1, 1)]), BandwidthRule.rule_of_thumb(),
             geo.sphere())
    est = lambda v: conformity_rank(cm, 0.0, np.atleast_2d(v)) >= 0.1
    d = ex.set_comparison(est, cap, geo.sphere(), 100_000, ex.substream(1, "mc%d" % n))
    print("n=%5d  sym diff %.4f  Jaccard %.3f" % (n, d["sym_diff"], d["jaccard"]))
