"""
One regularized tensor step, then whole runs
============================================

A model step minimizes the p-th order Taylor polynomial plus a power of the
step norm.  The subsolver returns an approximate minimizer together with a
certificate: the model value does not exceed the objective, and the model
gradient is small relative to the step length.
"""

import numpy as np

from holdertensor import (ModelSpec, SchemeConfig, SubsolverConfig, run_alg1, run_alg2,
                          solve_model, zoo)

# f(x) = ||x - c||^3 / 3 has a Lipschitz continuous Hessian (nu = 1)
n = 6
rng = np.random.default_rng(0)
c = rng.standard_normal(n)
f = zoo("power_norm", n, p=2, nu=1.0, degree=3.0, center=c)
x0 = np.zeros(n)

# a single cubic step from x0 with regularization constant H = 4
spec = ModelSpec(x0, 2, 4.0, 1.0)
x1, cert = solve_model(spec, f, None, SubsolverConfig(theta=1e-2))
print("f(x0) = %.6f, f(x1) = %.6f" % (f.value(x0), f.value(x1)))
print("certificate accepted:", cert.accepted,
      " residual %.2e <= %.2e" % (cert.model_grad_plus_subgrad_norm, cert.gradient_bound))

# the basic method (doubling search on H) against the accelerated one
cfg = SchemeConfig(1e-8, p=2, nu=1.0)
for run in (run_alg1, run_alg2):
    trace = run(f, cfg, x0)
    last = trace.rows[-1]
    print("%s: %s after %d iterations, %d oracle calls, gradient %.2e"
          % (trace.scheme, trace.status, last[0], last[6], last[2]))

# the universal variant does not need nu: it regularizes with alpha = 1
trace = run_alg1(zoo("log_sum_exp", n), SchemeConfig(1e-8), rng.standard_normal(n))
print("universal alg1 on log-sum-exp:", trace.status, "after", trace.rows[-1][0], "iterations")
