"""
Boundary geometry checks
========================

The reflection ``Phi_eta`` flips points below a Lipschitz graph to points
above it.  Here we sample the distance comparison it satisfies and the
decay of the boundary integral ``J`` as points approach the graph.
"""

import numpy as np

from fkorn.domains import EpigraphDomain, geometric_bound, geometric_inequality_check, profile_with_lipschitz
from fkorn.korn import j_bound_check
from fkorn.seminorms import SeminormParams

dom = EpigraphDomain(2, profile_with_lipschitz("windowed_sine", 0.59))
for eta in (0.5, 1.0, 2.0):
    c = 2 * max(1.0, eta)
    rep = geometric_inequality_check(dom, eta, c, 100_000, seed=0)
    print(f"eta={eta}: admissible M^2 {geometric_bound(eta, c):.4f}, "
          f"violations {rep.violations}, worst ratio {rep.worst_ratio:.3f}")

# the admissible bound bottoms out at exactly 9/25 when eta = 1
etas = np.logspace(-2, 2, 401)
print("min over eta:", min(geometric_bound(e, 2 * max(1.0, e)) for e in etas))

for s, p in ((0.4, 2.0), (0.6, 3.0)):
    rep = j_bound_check(EpigraphDomain(2, profile_with_lipschitz("sine", 0.3)), SeminormParams(s, p),
                        base_point=[0.2], seed=1)
    print(f"s={s}, p={p}: slope {rep.slope:.3f} (expected {rep.expected_slope}), "
          f"sup J t^sp = {rep.sup_product:.3f}")
