"""
Composite problems and regularize-and-restart
=============================================

With a simple convex term phi (here an l1 penalty or a box) the schemes
measure stationarity through grad f + g, with g a subgradient of phi.  The
restart scheme adds a small uniformly convex term and reruns an accelerated
method, which turns a slow gradient-norm rate into a logarithmic number of
restarts.
"""

import numpy as np

from holdertensor import CompositePart, SchemeConfig, run_alg3, run_alg4, run_alg6_restart, zoo

n = 5
rng = np.random.default_rng(1)
c = rng.standard_normal(n)
f = zoo("power_norm", n, p=2, nu=1.0, degree=3.0, center=c)
cfg = SchemeConfig(1e-6, p=2, nu=1.0)

for phi in (CompositePart.l1(0.3), CompositePart.box(-0.5 * np.ones(n), 0.5 * np.ones(n))):
    for run in (run_alg3, run_alg4):
        trace = run(f, phi, cfg, np.zeros(n))
        x = trace.iterates[-1]
        print("%s with %s: %s after %d iterations, x = %s"
              % (trace.scheme, phi.kind, trace.status, trace.rows[-1][0], np.round(x, 4)))

# the restart scheme needs a bound R on the distance to a solution
x0 = np.zeros(n)
R = max(1.0, float(np.linalg.norm(x0 - c)))
trace = run_alg6_restart(f, None, SchemeConfig(1e-4, p=2, nu=1.0), x0, R=R)
meta = trace.meta
print("alg6: delta = %.2e, restart length m = %d, %s after %d restarts, gradient %.2e"
      % (meta["delta"], meta["m"], trace.status, trace.rows[-1][0], trace.series["f_grad"][-1]))
