"""Outer tensor methods driving the gradient norm below a target.

All schemes share the same building block: a certified approximate minimizer
of a power-regularized Taylor model around some center.  They differ in how
the regularization constant is chosen (doubling line search or fixed) and in
how centers are produced (plain steps, estimating sequences, restarts).

Each ``run_*`` function returns a :class:`RunTrace`.  A trace row describes
the state after an iteration: the objective value, the dual norm of the
(composite) gradient, the regularization constants in force for the next
iteration, the number of doublings spent and the cumulative oracle-call count.
Accepted steps are kept as :class:`StepRecord` objects so that every
acceptance test can be re-checked after the fact.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .metric import as_vector
from .models import ModelSpec, RegularizedModel
from .oracle import PowerNorm, SmoothOracle
from .subsolver import (
    PsiState,
    SubsolverConfig,
    SubsolverError,
    solve_at_coefficient,
    solve_model,
    solve_psi,
)

__all__ = [
    "SchemeConfig",
    "SchemeError",
    "StepRecord",
    "RunTrace",
    "TRACE_COLUMNS",
    "C_p_nu",
    "evaluate_N",
    "evaluate_Ntilde",
    "make_regularized",
    "restart_length",
    "delta_from_distance",
    "delta_from_residual",
    "run_alg1",
    "run_alg2",
    "run_alg3",
    "run_alg4",
    "run_accelerated",
    "run_alg6_restart",
]

TRACE_COLUMNS = ("iter", "f_value", "grad_dual_norm", "H_t", "Htilde_t", "inner_trials",
                 "oracle_calls_cum", "accept_tag")


@dataclass(frozen=True)
class SchemeConfig:
    """Outer-loop settings shared by all schemes.

    ``nu=None`` selects the universal variant (model exponent ``alpha = 1``);
    a number selects the known-exponent variant with ``alpha = nu``.
    """

    epsilon: float
    H0: float = 1.0
    Htilde0: float = 1.0
    theta: float = 1e-2
    nu: float | None = None
    max_outer_iterations: int = 10000
    p: int = 2
    nonconvex: bool = False
    max_doublings: int = 60
    max_inner_iterations: int = 50000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not (self.H0 > 0 and self.Htilde0 > 0):
            raise ValueError("H0 and Htilde0 must be positive")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.nu is not None and not 0.0 <= self.nu <= 1.0:
            raise ValueError("nu must lie in [0, 1]")
        if self.p not in (2, 3):
            raise ValueError("p must be 2 or 3")
        if self.max_outer_iterations < 0 or self.max_doublings < 1:
            raise ValueError("iteration budgets must be positive")

    @property
    def alpha(self):
        return 1.0 if self.nu is None else float(self.nu)

    @property
    def q(self):
        return self.p + self.alpha

    def subsolver(self):
        return SubsolverConfig(theta=self.theta, max_inner_iterations=self.max_inner_iterations)


class SchemeError(RuntimeError):
    """A run stopped abnormally; ``trace`` holds everything recorded so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class StepRecord:
    """One accepted model step together with its acceptance test."""

    iteration: int
    phase: str
    trial: int
    reg_constant: float
    center: np.ndarray
    center_value: float
    candidate: np.ndarray
    candidate_value: float
    grad_norm: float
    certificate: object
    test_lhs: float
    test_rhs: float
    tag: str


@dataclass
class RunTrace:
    """Per-iteration record of a run.

    ``rows`` follow :data:`TRACE_COLUMNS`; ``iterates`` holds the point of
    each row; ``series`` holds scheme-specific extra sequences (for example
    the accumulated weights ``A`` of the accelerated methods).
    """

    scheme: str
    meta: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    series: dict = field(default_factory=lambda: defaultdict(list))
    steps: list = field(default_factory=list)
    status: str = "running"
    message: str = ""

    def append(self, it, f_value, grad, H, Htilde, inner, calls, tag, x=None):
        row = (int(it), float(f_value), float(grad), float(H), float(Htilde), int(inner),
               int(calls), str(tag))
        if not (math.isfinite(row[1]) and math.isfinite(row[2])):
            raise SchemeError(f"non-finite value or gradient at iteration {it}", self)
        if self.rows and row[6] < self.rows[-1][6]:
            raise SchemeError("oracle-call counter decreased", self)
        self.rows.append(row)
        self.iterates.append(None if x is None else np.array(x, dtype=float))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        idx = TRACE_COLUMNS.index(name)
        values = [r[idx] for r in self.rows]
        if name == "accept_tag":
            return values
        return np.array(values, dtype=int if name in ("iter", "inner_trials",
                                                       "oracle_calls_cum") else float)

    def min_gradient(self):
        return float(np.min(self.column("grad_dual_norm"))) if self.rows else math.inf

    def final_point(self):
        return self.iterates[-1]


def C_p_nu(p, nu):
    """``2 * prod_{i=1..p} (nu + i)``: Hölder constant of the p-th derivative of
    ``||x||^(p + nu)`` scaled as in the regularized problem."""
    return 2.0 * math.prod(nu + i for i in range(1, p + 1))


def _declared(f):
    if f.holder_nu is None or f.holder_constant is None:
        raise ValueError(f"oracle {f.name!r} does not declare Hölder data (nu, H)")
    return f.holder_nu, f.holder_constant


def _check_known_nu(f, cfg, scheme):
    if cfg.nu is None:
        raise ValueError(f"{scheme} needs a known exponent nu")
    nu, H = _declared(f)
    if abs(nu - cfg.nu) > 1e-15:
        raise ValueError(f"configured nu={cfg.nu} differs from the declared nu={nu}")
    return nu, H


def evaluate_N(cfg, f, epsilon=None):
    """Cap on the line-searched constant of the non-accelerated method."""
    eps = cfg.epsilon if epsilon is None else epsilon
    p, theta = cfg.p, cfg.theta
    fac = math.factorial(p - 1)
    if cfg.nu is not None:
        _, H = _check_known_nu(f, cfg, "evaluate_N")
        return max(1.5 * H, 3.0 * theta * fac)
    nu, H = _declared(f)
    d = p + nu - 1.0
    base = max(theta, (1.5 * H) ** (p / d) * 4.0 ** ((1.0 - nu) / d))
    return base * eps ** (-(1.0 - nu) / d)


def evaluate_Ntilde(cfg, f, epsilon=None):
    """Cap on the line-searched constant of the accelerated sequence."""
    eps = cfg.epsilon if epsilon is None else epsilon
    p, theta = cfg.p, cfg.theta
    fac = math.factorial(p - 1)
    if cfg.nu is not None:
        nu, H = _check_known_nu(f, cfg, "evaluate_Ntilde")
        return (p + nu - 1.0) * (H + theta * fac)
    nu, H = _declared(f)
    d = p + nu - 1.0
    return max(4.0 * theta * fac, (4.0 * H) ** (p / d) * (4.0 / eps) ** ((1.0 - nu) / d))


def make_regularized(f, delta, anchor):
    """Oracle of ``f(x) + delta / q * ||x - anchor||^q`` with ``q = p + nu``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    nu, H = _declared(f)
    p = f.order
    q = p + nu
    x0 = as_vector(anchor, f.dimension, "anchor").copy()
    pw = PowerNorm(f.space, q)

    def value(x):
        return f.value(x) + delta * pw.value(x - x0)

    def gradient(x):
        return f.gradient(x) + delta * pw.gradient(x - x0)

    def action(x, h, i):
        u = x - x0
        extra = pw.hessian_action(u, h) if i == 2 else pw.third_action(u, h)
        return f.derivative_action(x, h, i) + delta * extra

    def hessian(x):
        return f.hessian(x) + delta * pw.hessian(x - x0)

    info = dict(f.info)
    info.update(base=f.name, delta=float(delta), anchor=x0)
    return SmoothOracle(value, gradient, action, p, space=f.space, hessian=hessian,
                        holder_nu=nu, holder_constant=H + delta / q * C_p_nu(p, nu),
                        convex=f.convex, name=f"regularized({f.name})", info=info)


def restart_length(p, nu, H_delta, delta):
    """Number of accelerated steps per restart."""
    q = p + nu
    inner = 2.0 ** (4 * p + nu - 2) * q ** q * H_delta / (delta * math.factorial(p - 1))
    return 1 + math.ceil(inner ** (1.0 / q))


def delta_from_distance(epsilon, q, R):
    if R < 1:
        raise ValueError("R must be at least 1")
    return epsilon / (2.0 ** q * R ** (q - 1.0))


def delta_from_residual(epsilon, q, S):
    if S < 1:
        raise ValueError("S must be at least 1")
    return (epsilon / (2.0 ** q * (2.0 ** (q - 2.0) * q * S) ** ((q - 1.0) / q))) ** q


# --------------------------------------------------------------------------- helpers


class _Point:
    """Oracle information at a point, evaluated once."""

    __slots__ = ("x", "f", "g", "phi", "_G")

    def __init__(self, oracle, phi, x, value=None, grad=None):
        self.x = x
        self.f = oracle.value(x) if value is None else value
        self.g = oracle.gradient(x) if grad is None else grad
        self.phi = 0.0 if phi is None else phi.value(x)
        self._G = None

    @property
    def total(self):
        return self.f + self.phi

    def hessian(self, oracle):
        if self._G is None:
            self._G = oracle.hessian(self.x)
        return self._G


def _phi_or_none(phi):
    return None if phi is None or phi.is_zero else phi


def _start(f, phi, x0):
    x = as_vector(x0, f.dimension, "x0").copy()
    if phi is not None:
        if not f.space.is_identity:
            raise ValueError("composite terms require the identity metric")
        if not phi.contains(x):
            raise ValueError("x0 must lie in the domain of the composite term")
    return x


def _stationarity(f, phi, pt, g_phi=None):
    """Dual norm of ``grad f + g_phi``; without a certificate selection the
    element of the subdifferential closest to ``-grad f`` is used."""
    if phi is None:
        return f.space.dual_norm(pt.g), None
    if g_phi is None:
        g_phi = phi.closest_subgradient(pt.x, -pt.g)
    return f.space.dual_norm(pt.g + g_phi), g_phi


def _model_step(f, phi, center, M, alpha, cfg, sub, trace, where):
    spec = ModelSpec(center.x, cfg.p, M, alpha, phi)
    model = RegularizedModel(spec, f, center_value=center.f, center_gradient=center.g,
                             center_hessian=center.hessian(f))
    try:
        return solve_model(spec, f, phi, sub, model=model, center_value=center.total)
    except SubsolverError as exc:
        trace.status = "error"
        trace.message = f"{where}: {exc}"
        raise SchemeError(trace.message, trace) from exc


def _decrease_rhs(gnorm, p, q, M):
    return gnorm ** (q / (q - 1.0)) / (8.0 * math.factorial(p + 1) * M ** (1.0 / (q - 1.0)))


def _record_test_point(trace, x):
    """Append ``x`` to the ordered list of points where the oracle was queried."""
    pts = trace.series["test_points"]
    if not pts or not np.array_equal(pts[-1], x):
        pts.append(np.array(x, dtype=float))


def _doubling_descent(f, center, H, cfg, sub, trace, it, phase):
    """Doubling line search on the descent test.

    Returns ``(point, i, tag, min_trial_grad)``.
    """
    p, q, alpha, eps = cfg.p, cfg.q, cfg.alpha, cfg.epsilon
    min_trial = math.inf
    for i in range(cfg.max_doublings + 1):
        M = 2.0 ** i * H
        xp, cert = _model_step(f, None, center, M, alpha, cfg, sub, trace,
                               f"iteration {it}, {phase} trial {i}")
        pt = _Point(f, None, xp)
        _record_test_point(trace, xp)
        gn = f.space.dual_norm(pt.g)
        min_trial = min(min_trial, gn)
        lhs = center.f - pt.f
        rhs = _decrease_rhs(gn, p, q, M)
        if gn <= eps:
            tag = "grad_stop"
        elif lhs >= rhs:
            tag = "sufficient_decrease"
        else:
            continue
        trace.steps.append(StepRecord(it, phase, i, M, center.x, center.total, xp, pt.total,
                                      gn, cert, lhs, rhs, tag))
        return pt, i, tag, min_trial
    trace.status = "error"
    trace.message = f"iteration {it}: {phase} line search exceeded {cfg.max_doublings} doublings"
    raise SchemeError(trace.message, trace)


def _fixed_step(f, phi, center, M, alpha, cfg, sub, trace, it, phase):
    """Certified composite step with constant ``M``; records the decrease test."""
    xp, cert = _model_step(f, phi, center, M, alpha, cfg, sub, trace,
                           f"iteration {it}, {phase} step")
    pt = _Point(f, phi, xp)
    gn, g_phi = _stationarity(f, phi, pt, cert.g_phi if phi is not None else None)
    lhs = center.total - pt.total
    rhs = _decrease_rhs(gn, cfg.p, cfg.q, M)
    trace.steps.append(StepRecord(it, phase, 0, M, center.x, center.total, xp, pt.total, gn,
                                  cert, lhs, rhs, "fixed_step"))
    return pt, gn, g_phi


def _base_meta(f, cfg, x0, scheme, phi=None):
    return {
        "scheme": scheme,
        "instance": f.name,
        "n": f.dimension,
        "p": cfg.p,
        "nu": cfg.nu,
        "alpha": cfg.alpha,
        "epsilon": cfg.epsilon,
        "theta": cfg.theta,
        "H0": cfg.H0,
        "Htilde0": cfg.Htilde0,
        "holder_nu": f.holder_nu,
        "holder_constant": f.holder_constant,
        "composite": "zero" if phi is None else phi.spec(),
        "x0": x0.copy(),
        "nonconvex": bool(cfg.nonconvex),
        **{k: v for k, v in f.info.items()
           if k in ("f_star", "x_star", "D0", "minimizer_norm_bound")},
    }


def _check_order(f, cfg):
    if f.order != cfg.p:
        raise ValueError(f"oracle order {f.order} differs from configured p={cfg.p}")
    if cfg.nu is not None and f.holder_nu is not None and abs(f.holder_nu - cfg.nu) > 1e-15:
        raise ValueError(f"configured nu={cfg.nu} differs from the declared nu={f.holder_nu}")


# --------------------------------------------------------------------------- schemes


def run_alg1(f, cfg, x0):
    """Adaptive tensor method with a doubling search on the regularization.

    A trial with constant ``2^i H_t`` is accepted when its gradient norm is at
    most epsilon or when the decrease test holds; then ``H_{t+1} = 2^(i-1) H_t``.
    With ``cfg.nonconvex`` the loop is unchanged and the trace is tagged.
    """
    _check_order(f, cfg)
    x = _start(f, None, x0)
    sub = cfg.subsolver()
    trace = RunTrace("alg1", _base_meta(f, cfg, x, "alg1"))
    pt = _Point(f, None, x)
    gn = f.space.dual_norm(pt.g)
    H = cfg.H0
    calls = 0
    trace.append(0, pt.f, gn, H, math.nan, 0, 0, "start", pt.x)
    _record_test_point(trace, pt.x)
    trace.series["min_trial_grad"].append(gn)
    t = 0
    while gn > cfg.epsilon and t < cfg.max_outer_iterations:
        new, i, tag, min_trial = _doubling_descent(f, pt, H, cfg, sub, trace, t, "x")
        calls += i + 1
        H = 2.0 ** (i - 1) * H
        pt = new
        gn = f.space.dual_norm(pt.g)
        t += 1
        trace.append(t, pt.f, gn, H, math.nan, i, calls, tag, pt.x)
        trace.series["min_trial_grad"].append(min_trial)
    trace.status = "converged" if gn <= cfg.epsilon else "budget_exhausted"
    return trace


def run_alg2(f, cfg, x0):
    """Adaptive accelerated tensor method with a monitoring sequence.

    The accelerated sequence ``x_t`` uses a doubling search on ``Htilde``
    with the inner-product test; the monitor ``z_t`` takes descent steps
    (doubling on ``H``) from the better of ``z_t`` and ``x_{t+1}``.

    Trace rows report ``f(x_t)`` and ``||grad f(z_t)||``; the series
    ``x_grad`` and ``z_f`` hold the other two quantities.
    """
    _check_order(f, cfg)
    x = _start(f, None, x0)
    sub = cfg.subsolver()
    p, q, alpha, eps = cfg.p, cfg.q, cfg.alpha, cfg.epsilon
    fac = math.factorial(p - 1)
    space = f.space
    trace = RunTrace("alg2", _base_meta(f, cfg, x, "alg2"))
    xpt = _Point(f, None, x)
    zpt = xpt
    v = x.copy()
    A = 0.0
    psi = PsiState.initial(x, q)
    H, Ht = cfg.H0, cfg.Htilde0
    calls = 0
    xg = space.dual_norm(xpt.g)
    zg = xg
    trace.append(0, xpt.f, zg, H, Ht, 0, 0, "start", xpt.x)
    _record_test_point(trace, xpt.x)
    s = trace.series
    s["x_grad"].append(xg)
    s["z_f"].append(zpt.f)
    s["z"].append(zpt.x)
    s["A"].append(A)
    s["j"].append(0)
    s["min_trial_grad"].append(xg)
    t = 0
    while min(xg, zg) > eps and t < cfg.max_outer_iterations:
        min_trial = math.inf
        for i in range(cfg.max_doublings + 1):
            M = 2.0 ** i * Ht
            a = solve_at_coefficient(A, M, p, q)
            gamma = a / (A + a)
            y = (1.0 - gamma) * xpt.x + gamma * v
            ypt = _Point(f, None, y)
            _record_test_point(trace, y)
            xp, cert = _model_step(f, None, ypt, M, alpha, cfg, sub, trace,
                                   f"iteration {t}, x trial {i}")
            cand = _Point(f, None, xp)
            _record_test_point(trace, xp)
            gn = space.dual_norm(cand.g)
            min_trial = min(min_trial, gn)
            lhs = float(cand.g @ (y - xp))
            rhs = 0.25 * (fac / M) ** (1.0 / (q - 1.0)) * gn ** (q / (q - 1.0))
            if gn <= eps:
                tag = "grad_stop"
            elif lhs >= rhs:
                tag = "accel_inequality"
            else:
                continue
            break
        else:
            trace.status = "error"
            trace.message = f"iteration {t}: x line search exceeded {cfg.max_doublings} doublings"
            raise SchemeError(trace.message, trace)
        trace.steps.append(StepRecord(t, "x", i, M, y, ypt.total, xp, cand.total, gn, cert,
                                      lhs, rhs, tag))
        s["y"].append(y)
        s["a"].append(a)
        Ht = 2.0 ** (i - 1) * Ht
        xpt = cand
        xg = gn
        psi.add_linearization(a, cand.f, cand.g, cand.x)
        A += a
        v = solve_psi(psi, space)
        zbar = xpt if xpt.f <= zpt.f else zpt
        zpt, j, ztag, zmin = _doubling_descent(f, zbar, H, cfg, sub, trace, t, "z")
        H = 2.0 ** (j - 1) * H
        zg = space.dual_norm(zpt.g)
        calls += (i + 1) + (j + 1)
        t += 1
        trace.append(t, xpt.f, zg, H, Ht, i, calls, tag, xpt.x)
        s["x_grad"].append(xg)
        s["z_f"].append(zpt.f)
        s["z"].append(zpt.x)
        s["A"].append(A)
        s["j"].append(j)
        s["z_tag"].append(ztag)
        s["min_trial_grad"].append(min(min_trial, zmin))
    trace.status = "converged" if min(xg, zg) <= eps else "budget_exhausted"
    return trace


def run_alg3(f, phi, cfg, x0):
    """Composite tensor method with the fixed constant
    ``M = max{p H, 3 theta (p-1)!}``."""
    _check_order(f, cfg)
    nu, H = _check_known_nu(f, cfg, "alg3")
    phi = _phi_or_none(phi)
    x = _start(f, phi, x0)
    sub = cfg.subsolver()
    p = cfg.p
    M = max(p * H, 3.0 * cfg.theta * math.factorial(p - 1))
    trace = RunTrace("alg3", _base_meta(f, cfg, x, "alg3", phi))
    trace.meta["M"] = M
    pt = _Point(f, phi, x)
    gn, _ = _stationarity(f, phi, pt)
    calls = 0
    trace.append(0, pt.total, gn, M, math.nan, 0, 0, "start", pt.x)
    t = 0
    while gn > cfg.epsilon and t < cfg.max_outer_iterations:
        pt, gn, _ = _fixed_step(f, phi, pt, M, nu, cfg, sub, trace, t, "x")
        calls += 1
        t += 1
        trace.append(t, pt.total, gn, M, math.nan, 0, calls, "fixed_step", pt.x)
    trace.status = "converged" if gn <= cfg.epsilon else "budget_exhausted"
    return trace


def run_alg4(f, phi, cfg, x0):
    """Two-phase accelerated composite method with ``M = p (H + 3 theta (p-1)!)``.

    Rows report ``f~(x_t)`` and ``||grad f~(z_t)||``; the series ``x_grad``
    and ``z_f`` hold the other two quantities.
    """
    _check_order(f, cfg)
    nu, H = _check_known_nu(f, cfg, "alg4")
    phi = _phi_or_none(phi)
    x = _start(f, phi, x0)
    sub = cfg.subsolver()
    p, q = cfg.p, cfg.q
    space = f.space
    M = p * (H + 3.0 * cfg.theta * math.factorial(p - 1))
    trace = RunTrace("alg4", _base_meta(f, cfg, x, "alg4", phi))
    trace.meta["M"] = M
    xpt = _Point(f, phi, x)
    zpt = xpt
    v = x.copy()
    A = 0.0
    psi = PsiState.initial(x, q)
    xg, _ = _stationarity(f, phi, xpt)
    zg = xg
    calls = 0
    trace.append(0, xpt.total, zg, M, M, 0, 0, "start", xpt.x)
    s = trace.series
    s["x_grad"].append(xg)
    s["z_f"].append(zpt.total)
    s["z"].append(zpt.x)
    s["A"].append(A)
    t = 0
    while (t == 0 or min(xg, zg) > cfg.epsilon) and t < cfg.max_outer_iterations:
        a = solve_at_coefficient(A, M, p, q)
        gamma = a / (A + a)
        y = (1.0 - gamma) * xpt.x + gamma * v
        ypt = _Point(f, phi, y)
        xpt, xg, _ = _fixed_step(f, phi, ypt, M, nu, cfg, sub, trace, t, "x")
        psi.add_linearization(a, xpt.f, xpt.g, xpt.x, composite=phi is not None)
        A += a
        v = solve_psi(psi, space, phi)
        zbar = xpt if xpt.total <= zpt.total else zpt
        zpt, zg, _ = _fixed_step(f, phi, zbar, M, nu, cfg, sub, trace, t, "z")
        calls += 2
        t += 1
        trace.append(t, xpt.total, zg, M, M, 0, calls, "fixed_step", xpt.x)
        s["x_grad"].append(xg)
        s["z_f"].append(zpt.total)
        s["z"].append(zpt.x)
        s["A"].append(A)
        s["a"].append(a)
        s["y"].append(y)
    converged = t > 0 and min(xg, zg) <= cfg.epsilon
    trace.status = "converged" if converged else "budget_exhausted"
    return trace


def run_accelerated(f, phi, cfg, fixed_M, iterations, x0, scheme="algA"):
    """Accelerated composite tensor method with a fixed constant, run for
    exactly ``iterations`` steps without a stopping test.

    Row ``t`` (``t = 1..iterations``) describes ``x_t``; the starting point is
    kept in ``meta["x0"]`` and ``meta["f0"]``.  The series ``A``, ``a``,
    ``psi_min``, ``psi_linear`` and ``psi_constant`` allow the estimating
    function to be rebuilt at any ``t``.
    """
    _check_order(f, cfg)
    nu, H = _check_known_nu(f, cfg, scheme)
    phi = _phi_or_none(phi)
    x = _start(f, phi, x0)
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    p, q = cfg.p, cfg.q
    threshold = (q - 1.0) * (H + cfg.theta * math.factorial(p - 1))
    if fixed_M < threshold:
        raise ValueError(f"fixed_M={fixed_M} is below the required {threshold}")
    sub = cfg.subsolver()
    space = f.space
    trace = RunTrace(scheme, _base_meta(f, cfg, x, scheme, phi))
    xpt = _Point(f, phi, x)
    trace.meta.update(M=float(fixed_M), f0=xpt.total, iterations=int(iterations))
    v = x.copy()
    A = 0.0
    psi = PsiState.initial(x, q)
    s = trace.series
    calls = 0
    for t in range(iterations):
        a = solve_at_coefficient(A, fixed_M, p, q)
        gamma = a / (A + a)
        y = (1.0 - gamma) * xpt.x + gamma * v
        ypt = _Point(f, phi, y)
        xpt, gn, _ = _fixed_step(f, phi, ypt, fixed_M, nu, cfg, sub, trace, t, "x")
        psi.add_linearization(a, xpt.f, xpt.g, xpt.x, composite=phi is not None)
        A += a
        v = solve_psi(psi, space, phi)
        calls += 1
        trace.append(t + 1, xpt.total, gn, fixed_M, fixed_M, 0, calls, "fixed_step", xpt.x)
        s["A"].append(A)
        s["a"].append(a)
        s["psi_min"].append(psi.value(v, space, phi))
        s["psi_linear"].append(psi.linear.copy())
        s["psi_constant"].append(psi.constant)
        s["psi_weight"].append(psi.composite_weight)
    trace.status = "completed"
    return trace


def run_alg6_restart(f, phi, cfg, x0, delta=None, R=None, S=None):
    """Regularize-and-restart method.

    The problem is regularized by ``delta / q * ||x - x0||^q``.  Each restart
    runs the accelerated method for ``m`` steps from ``y_k`` and then takes one
    certified step from ``y_{k+1}`` to obtain ``u_{k+1}``.  The run stops once
    the regularized stationarity measure at ``u_k`` is at most ``epsilon / 2``.

    ``delta`` may be given directly, or derived from a distance bound ``R``
    or a residual bound ``S`` (both at least 1).  Rows report the regularized
    objective and stationarity at ``u_k``; the series ``f_grad`` holds the
    stationarity of the original problem at ``u_k``.
    """
    _check_order(f, cfg)
    nu, H = _check_known_nu(f, cfg, "alg6")
    phi = _phi_or_none(phi)
    x = _start(f, phi, x0)
    p, q, eps = cfg.p, cfg.q, cfg.epsilon
    if R is not None and R < 1:
        raise ValueError("R must be at least 1")
    if S is not None and S < 1:
        raise ValueError("S must be at least 1")
    if delta is None:
        if R is not None:
            delta = delta_from_distance(eps, q, R)
        elif S is not None:
            delta = delta_from_residual(eps, q, S)
        else:
            raise ValueError("give delta, R or S")
    F = make_regularized(f, delta, x)
    H_delta = p * (F.holder_constant + 3.0 * cfg.theta * math.factorial(p - 1))
    m = restart_length(p, nu, H_delta, delta)
    sub = cfg.subsolver()
    trace = RunTrace("alg6", _base_meta(f, cfg, x, "alg6", phi))
    trace.meta.update(delta=float(delta), R=R, S=S, H_delta=H_delta, m=m,
                      H_F=F.holder_constant)
    upt = _Point(F, phi, x)
    gF, g_phi = _stationarity(F, phi, upt)
    gf = f.space.dual_norm(f.gradient(x) + (0.0 if g_phi is None else g_phi))
    trace.append(0, upt.total, gF, H_delta, math.nan, 0, 0, "start", upt.x)
    s = trace.series
    s["f_grad"].append(gf)
    s["y"].append(x.copy())
    y = x.copy()
    calls = 0
    k = 0
    while (k == 0 or gF > eps / 2.0) and k < cfg.max_outer_iterations:
        try:
            inner = run_accelerated(F, phi, cfg, H_delta, m, y, scheme="alg5")
        except SchemeError as exc:
            trace.status = "error"
            trace.message = f"restart {k}: {exc}"
            raise SchemeError(trace.message, trace) from exc
        for st in inner.steps:
            st.phase = f"alg5[{k}]"
        trace.steps.extend(inner.steps)
        y = inner.final_point() if m > 0 else y
        ypt = _Point(F, phi, y)
        upt, gF, g_phi = _fixed_step(F, phi, ypt, H_delta, nu, cfg, sub, trace, k, "u")
        gf = f.space.dual_norm(f.gradient(upt.x) + (0.0 if g_phi is None else g_phi))
        calls += m + 1
        k += 1
        trace.append(k, upt.total, gF, H_delta, math.nan, m, calls, "fixed_step", upt.x)
        s["f_grad"].append(gf)
        s["y"].append(y.copy())
    converged = k > 0 and gF <= eps / 2.0
    trace.status = "converged" if converged else "budget_exhausted"
    return trace
