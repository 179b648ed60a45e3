"""
Cylinder to cylinder: paired wind stations
==========================================

Wind direction and speed at two stations are points of S^1 x [0, 20].  Real
records can be passed through ``mconf wind --input FILE``; here a synthetic
model stands in for them.
"""

import numpy as np

from mconf import experiments as ex
from mconf import geometry as geo

model = ex.CylinderRegressionModel()
theta1, r1, theta2, r2 = model.generate(4000, ex.substream(0, "wind"))

run = ex.wind_run(theta1, r1, theta2, r2, seed=0, alpha=0.2, h=0.4,
                  query=(2.3, 5.1), truth=(2.4, 6.6))

print("rows used %d, dropped %d" % (run["n_rows"], run["n_dropped"]))
print("xi correlation of speeds %.3f" % run["xi_intensity"])
print("angular correlation of directions %.3f" % run["angular_correlation"])

pset = run["set"]
th, r = geo.cylinder_coords(pset.members)
print("80%% set at (2.3 rad, 5.1 m/s): %.1f%% of the grid" % (100 * pset.fraction))
print("  direction range %.2f..%.2f rad, speed range %.1f..%.1f m/s"
      % (th.min(), th.max(), r.min(), r.max()))
print("  (2.4 rad, 6.6 m/s) in set:", run["truth_in_set"])
print("held-out coverage %.3f" % run["coverage"].overall)
