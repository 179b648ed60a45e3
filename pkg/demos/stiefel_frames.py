"""
Prediction sets for principal frames
====================================

Each response is the pair of leading principal directions of a 400-point
Gaussian cloud, i.e. a point of the Stiefel manifold V_2(R^3) stored as a
length-6 vector.  We build the 95% set at x = 0.1 over a Haar grid.
"""

import numpy as np

from mconf import experiments as ex
from mconf import geometry as geo

model = ex.StiefelRegressionModel()
print("population first axis at x=0.1:", np.round(model.eigenbasis(0.1)[:, 0], 4))

run = ex.stiefel_run(seed=1, model=model, alpha=0.05, x_query=0.1, n_grid=10_000)
pset = run["set"]
print("grid points in the set: %d of %d" % (pset.in_set.sum(), pset.in_set.size))

# first columns of the in-set frames gather around the population axis
frames = geo.as_frames(pset.members)
axis = model.eigenbasis(0.1)[:, 0]
ang = np.degrees(np.arccos(np.clip(np.abs(frames[:, :, 0] @ axis), 0, 1)))
print("angle of in-set first columns to the axis: median %.1f deg, max %.1f deg"
      % (np.median(ang), ang.max()))

print("a fresh response at x=0.1 is in the set:", run["query_in_set"])
print("held-out coverage %.3f" % run["coverage"].overall)
