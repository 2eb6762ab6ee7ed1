"""Taylor polynomials, power-regularized models and the inexactness certificate.

For a center x, order p, constant H and exponent alpha the model is

    Omega(y) = Phi_{x,p}(y) + H / p! * ||y - x||^(p + alpha),

optionally plus a composite term phi(y).  A candidate y is certified when
``Omega(y) + phi(y) <= f(x) + phi(x)`` and
``||grad Omega(y) + g_phi||_* <= theta * ||y - x||^(p + alpha - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import PowerNorm

__all__ = [
    "ModelSpec",
    "Certificate",
    "RegularizedModel",
    "taylor_value",
    "taylor_gradient",
    "model_value",
    "model_gradient",
    "model_hessian",
    "convexity_threshold",
    "check_certificate",
    "rounding_floor",
]


@dataclass(frozen=True)
class ModelSpec:
    center: np.ndarray
    order: int
    reg_constant: float
    alpha: float
    composite: object = None

    def __post_init__(self):
        if not self.reg_constant > 0:
            raise ValueError("reg_constant must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.order not in (2, 3):
            raise ValueError("order must be 2 or 3")

    @property
    def power(self):
        return self.order + self.alpha


@dataclass
class Certificate:
    candidate: np.ndarray
    model_value_at_candidate: float
    center_value: float
    model_grad_plus_subgrad_norm: float
    step_norm: float
    theta: float
    accepted: bool
    g_phi: np.ndarray | None = None
    power: float = field(default=3.0, repr=False)
    rounding_allowance: float = 0.0

    @property
    def value_ok(self):
        return self.model_value_at_candidate <= self.center_value

    @property
    def gradient_bound(self):
        return self.theta * self.step_norm ** (self.power - 1.0)

    @property
    def gradient_ok(self):
        return self.model_grad_plus_subgrad_norm <= self.gradient_bound + self.rounding_allowance


class RegularizedModel:
    """The model of ``spec`` around its center with derivatives of f cached."""

    def __init__(self, spec, f, center_value=None, center_gradient=None, center_hessian=None):
        if spec.order > f.order:
            raise ValueError(f"model order {spec.order} exceeds oracle order {f.order}")
        self.spec = spec
        self.f = f
        self.space = f.space
        x = np.asarray(spec.center, dtype=float)
        self.x = x
        self.p = spec.order
        self.q = spec.power
        self.f0 = f.value(x) if center_value is None else float(center_value)
        self.g0 = f.gradient(x) if center_gradient is None else np.asarray(center_gradient)
        self.G = f.hessian(x) if center_hessian is None else np.asarray(center_hessian)
        self.power = PowerNorm(self.space, self.q)
        # H/p! * ||h||^q = coef * ||h||^q / q
        self.coef = spec.reg_constant * self.q / math.factorial(self.p)

    def _third(self, h):
        return self.f.derivative_action(self.x, h, 3)

    def taylor_value(self, y):
        h = y - self.x
        Gh = self.G @ h
        val = self.f0 + self.g0 @ h + 0.5 * (h @ Gh)
        if self.p == 3:
            val += (self._third(h) @ h) / 6.0
        return float(val)

    def taylor_gradient(self, y):
        h = y - self.x
        g = self.g0 + self.G @ h
        if self.p == 3:
            g = g + 0.5 * self._third(h)
        return g

    def taylor_hessian(self, y):
        if self.p == 2:
            return self.G.copy()
        h = y - self.x
        return self.G + self.f.third_derivative_matrix(self.x, h)

    def value(self, y):
        """Smooth model value (composite term excluded)."""
        return self.taylor_value(y) + self.coef * self.power.value(y - self.x)

    def full_value(self, y):
        phi = self.spec.composite
        if phi is None:
            return self.value(y)
        pv = phi.value(y)
        return math.inf if math.isinf(pv) else self.value(y) + pv

    def gradient(self, y):
        return self.taylor_gradient(y) + self.coef * self.power.gradient(y - self.x)

    def hessian(self, y):
        return self.taylor_hessian(y) + self.coef * self.power.hessian(y - self.x)


def taylor_value(f, x, y, order=None):
    """``Phi_{x,p}(y) = f(x) + sum_i D^i f(x)[y-x]^i / i!``."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(y, dtype=float) - x
    p = f.order if order is None else order
    val = f.value(x) + f.gradient(x) @ h
    for i in range(2, p + 1):
        val += (f.derivative_action(x, h, i) @ h) / math.factorial(i)
    return float(val)


def taylor_gradient(f, x, y, order=None):
    """``grad Phi_{x,p}(y) = sum_i D^i f(x)[y-x]^{i-1} / (i-1)!``."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(y, dtype=float) - x
    p = f.order if order is None else order
    g = f.gradient(x)
    for i in range(2, p + 1):
        g = g + f.derivative_action(x, h, i) / math.factorial(i - 1)
    return g


def _reg(spec, f, y):
    q = spec.power
    return spec.reg_constant * q / math.factorial(spec.order), PowerNorm(f.space, q), \
        np.asarray(y, dtype=float) - np.asarray(spec.center, dtype=float)


def model_value(spec, f, y):
    """Model value including the composite term; ``+inf`` outside its domain."""
    coef, pw, h = _reg(spec, f, y)
    val = taylor_value(f, spec.center, y, spec.order) + coef * pw.value(h)
    if spec.composite is not None:
        pv = spec.composite.value(np.asarray(y, dtype=float))
        if math.isinf(pv):
            return math.inf
        val += pv
    return float(val)


def model_gradient(spec, f, y):
    """Gradient of the smooth model; the composite term is not included."""
    coef, pw, h = _reg(spec, f, y)
    return taylor_gradient(f, spec.center, y, spec.order) + coef * pw.gradient(h)


def model_hessian(spec, f, y):
    return RegularizedModel(spec, f).hessian(np.asarray(y, dtype=float))


def convexity_threshold(f, nu):
    """Smallest regularization constant, ``(p - 1) H_{f,p}(nu)``, that makes the
    model convex for a convex f."""
    if f.holder_constant is None or f.holder_nu is None:
        raise ValueError("oracle does not declare a Hölder constant")
    if abs(f.holder_nu - nu) > 1e-15:
        raise ValueError(f"oracle declares nu={f.holder_nu}, not {nu}")
    return (f.order - 1) * f.holder_constant


def rounding_floor(model, x_plus, phi=None):
    """Size of the model-gradient error caused by rounding at ``x_plus``.

    The model gradient is a sum of terms of magnitude up to ``||g0||``,
    ``||G|| (||x|| + ||h||)`` and the power-term gradient; evaluating it in
    double precision carries an error of a few units in the last place of
    that magnitude.  When the admissible residual ``theta ||h||^(q-1)`` falls
    below this level no representable point can be certified, so the
    certificate allows for it.
    """
    h = x_plus - model.x
    scale = (np.linalg.norm(model.g0) + np.linalg.norm(model.G, 2)
             * (np.linalg.norm(model.x) + np.linalg.norm(h))
             + np.linalg.norm(model.coef * model.power.gradient(h)))
    if phi is not None and phi.kind == "l1":
        scale += phi.weight * math.sqrt(h.size)
    return 16.0 * np.finfo(float).eps * float(scale)


def check_certificate(spec, f, x_plus, g_phi=None, theta=0.0, center_value=None, model=None):
    """Evaluate both certificate inequalities at ``x_plus``.

    ``center_value`` is the objective value (``f + phi``) at the center; pass
    the value the caller already holds so that loop and certificate agree.
    """
    x_plus = np.asarray(x_plus, dtype=float)
    phi = spec.composite
    if (phi is not None and not phi.is_zero) and g_phi is None:
        raise ValueError("composite model requires a subgradient selection g_phi")
    model = RegularizedModel(spec, f) if model is None else model
    if center_value is None:
        center_value = model.f0 + (0.0 if phi is None else phi.value(model.x))
    mval = model.full_value(x_plus)
    grad = model.gradient(x_plus)
    if g_phi is not None:
        grad = grad + g_phi
    res = f.space.dual_norm(grad)
    step = f.space.primal_norm(x_plus - model.x)
    bound = theta * step ** (spec.power - 1.0)
    allowance = rounding_floor(model, x_plus, phi)
    accepted = bool(mval <= center_value and res <= bound + allowance)
    return Certificate(candidate=x_plus, model_value_at_candidate=float(mval),
                       center_value=float(center_value), model_grad_plus_subgrad_norm=res,
                       step_norm=step, theta=float(theta), accepted=accepted,
                       g_phi=None if g_phi is None else np.asarray(g_phi),
                       power=spec.power, rounding_allowance=allowance)
