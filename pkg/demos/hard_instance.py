"""
Why tensor methods cannot beat the lower bound
==============================================

The chain function f_k couples neighbouring coordinates, so a method that
starts at the origin discovers at most one new coordinate per oracle call.
While coordinate k is still untouched, the gradient norm stays above
1 / sqrt(k + 1).
"""

import numpy as np

from holdertensor import (HardInstance, SchemeConfig, gradient_lower_bound_check,
                          lower_bound_evaluate, run_alg1, run_alg2, subspace_growth_report)

inst = HardInstance(32, 16, p=2, nu=1.0)
f = inst.oracle()
print("optimal value f* = %.6f (closed form -2k/3 = %.6f)" % (inst.f_star, -2 * 16 / 3))

# sampled gradient floors on the coordinate subspaces
for k_sub in (1, 4, 8):
    floor = gradient_lower_bound_check(inst, k_sub, samples=500)
    print("k_sub = %d: smallest sampled gradient %.4f >= %.4f"
          % (k_sub, floor, 1 / np.sqrt(k_sub + 1)))

# both methods stay inside the subspaces, so their first iterates cannot be
# near-stationary
cfg = SchemeConfig(1e-4, max_outer_iterations=20)
for run in (run_alg1, run_alg2):
    trace = run(f, cfg, np.zeros(32))
    points = trace.iterates if run is run_alg1 else trace.series["test_points"]
    leak = max(r.leakage for r in subspace_growth_report(inst, points[:16]))
    grads = [np.linalg.norm(f.gradient(x)) for x in points[:15]]
    print("%s: leakage %.1e, smallest gradient over 15 points %.4f"
          % (trace.scheme, leak, min(grads)))

# the theoretical oracle-call lower bound grows like t^((3q-2)/(2q))
for t in (10, 100, 1000):
    print("t = %4d: residual-mode lower bound %.3e" % (t, lower_bound_evaluate(2, 1.0, t, "residual")))
