"""
Korn ratios on the unit disk
============================

Compares the projected-difference seminorm with the full Gagliardo
seminorm for the catalog fields, then searches bump fields for a large
ratio ``|u|_W^p / ([u]_X^p + ||u||_p^p)``.
"""

import numpy as np

from fkorn.domains import BallDomain
from fkorn.fields import CATALOG, catalog_field
from fkorn.korn import korn_record, max_ratio_search
from fkorn.quadrature import PairSamplingPlan
from fkorn.seminorms import SeminormParams, dense_seminorm_oracle, seminorm_estimates

disk = BallDomain((0.0, 0.0), 1.0)
params = SeminormParams(s=0.5, p=2.0)
plan = PairSamplingPlan(budget=200_000)

# Monte Carlo next to the extrapolated brute-force sum (20 and 40 cells per axis)
print(f"{'field':10s} {'[u]_X^p':>10s} {'oracle':>10s} {'|u|_W^p':>10s} {'oracle':>10s}")
for name in CATALOG:
    u = catalog_field(name)
    mc = seminorm_estimates(u, disk, params, plan, seed=0)
    ref = dense_seminorm_oracle(u, disk, params, 20, extrapolate=True)
    print(f"{name:10s} {mc['x'].value:10.4f} {ref['x'].value:10.4f} {mc['w'].value:10.4f} {ref['w'].value:10.4f}")

# the ratio for each catalog field
for name in CATALOG:
    rec = korn_record(catalog_field(name), disk, params, plan, seed=1)
    print(f"{name:10s} ratio {rec.ratio:.3f}")

# a short search; the best ratio found is a lower bound for the best constant
rep = max_ratio_search(disk, params, budget=20_000, restarts=2, max_iter=60, seed=2)
print(f"search: {rep.iterations} evaluations, ratio {rep.initial_ratio:.3f} -> {rep.max_ratio:.3f} ({rep.status})")
print("trace every 20 evaluations:", np.round(rep.trace[::20], 3))
