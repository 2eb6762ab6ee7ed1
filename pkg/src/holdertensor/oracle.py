"""Objective oracles: smooth part f with derivative actions, composite part phi.

A :class:`SmoothOracle` exposes ``value``, ``gradient`` and
``derivative_action(x, h, i)``, the dual vector ``D^i f(x)[h]^{i-1}``.
Only orders up to 3 are supported.  Oracles are stateless; oracle-call
accounting belongs to the schemes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metric import MetricSpace, as_vector

__all__ = [
    "SmoothOracle",
    "PowerNorm",
    "CompositePart",
    "HolderEstimate",
    "composite_value",
    "composite_gradient_mapping",
    "estimate_holder",
]

MAX_ORDER = 3


class SmoothOracle:
    """A p-times differentiable function with optional Hölder metadata.

    Parameters
    ----------
    value, gradient : callable
        ``value(x) -> float`` and ``gradient(x) -> ndarray``.
    derivative_action : callable
        ``derivative_action(x, h, i) -> ndarray`` returning ``D^i f(x)[h]^{i-1}``
        for ``2 <= i <= order``.
    order : int
        Differentiability order p, 2 or 3.
    space : MetricSpace, optional
        Defaults to the Euclidean space of dimension ``dimension``.
    hessian : callable, optional
        Dense Hessian; assembled from second-order actions when absent.
    holder_nu, holder_constant : float, optional
        Declared exponent and constant ``H_{f,p}(nu)`` when known.
    convex : bool
        Whether the function is known to be convex.
    info : dict, optional
        Free-form metadata (known minimizer, optimal value, ...).
    """

    def __init__(self, value, gradient, derivative_action, order, *, dimension=None,
                 space=None, hessian=None, holder_nu=None, holder_constant=None,
                 convex=True, name="oracle", info=None):
        order = int(order)
        if order < 2 or order > MAX_ORDER:
            raise ValueError(f"order must be 2 or 3, got {order}")
        if space is None:
            if dimension is None:
                raise ValueError("either space or dimension is required")
            space = MetricSpace(dimension)
        if (holder_nu is None) != (holder_constant is None):
            raise ValueError("holder_nu and holder_constant must be given together")
        if holder_nu is not None:
            if not 0.0 <= holder_nu <= 1.0:
                raise ValueError("holder_nu must lie in [0, 1]")
            if holder_constant < 0:
                raise ValueError("holder_constant must be nonnegative")
        self._value = value
        self._gradient = gradient
        self._action = derivative_action
        self._hessian = hessian
        self.order = order
        self.space = space
        self.holder_nu = None if holder_nu is None else float(holder_nu)
        self.holder_constant = None if holder_constant is None else float(holder_constant)
        self.convex = bool(convex)
        self.name = name
        self.info = dict(info or {})

    @property
    def dimension(self):
        return self.space.dimension

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return np.asarray(self._gradient(x), dtype=float)

    def derivative_action(self, x, h, order):
        if order == 1:
            return self.gradient(x)
        if not 2 <= order <= self.order:
            raise ValueError(f"derivative order {order} outside [1, {self.order}]")
        return np.asarray(self._action(x, h, order), dtype=float)

    def hessian(self, x):
        if self._hessian is not None:
            return np.asarray(self._hessian(x), dtype=float)
        n = self.dimension
        cols = [self._action(x, e, 2) for e in np.eye(n)]
        H = np.column_stack(cols)
        return 0.5 * (H + H.T)

    def third_derivative_matrix(self, x, h):
        """Matrix of the bilinear form ``D^3 f(x)[h, ., .]``, by polarization."""
        if self.order < 3:
            raise ValueError("third derivative requires order 3")
        n = self.dimension
        base = self._action(x, h, 3)
        cols = []
        for e in np.eye(n):
            cols.append(0.5 * (self._action(x, h + e, 3) - base - self._action(x, e, 3)))
        T = np.column_stack(cols)
        return 0.5 * (T + T.T)

    def with_order(self, order):
        """Same function viewed as an order-``order`` oracle (metadata dropped
        when the order changes, since Hölder data is order-specific)."""
        if order == self.order:
            return self
        return SmoothOracle(self._value, self._gradient, self._action, order,
                            space=self.space, hessian=self._hessian, convex=self.convex,
                            name=self.name, info=self.info)

    def __repr__(self):
        return (f"SmoothOracle({self.name!r}, n={self.dimension}, p={self.order}, "
                f"nu={self.holder_nu}, H={self.holder_constant})")


class PowerNorm:
    """``g(u) = ||u||^q / q`` in the metric of ``space`` and its derivatives."""

    def __init__(self, space, q):
        if q < 2:
            raise ValueError("power exponent must be at least 2")
        self.space = space
        self.q = float(q)

    def value(self, u):
        r = self.space.primal_norm(u)
        return r ** self.q / self.q

    def gradient(self, u):
        r = self.space.primal_norm(u)
        if r == 0.0:
            return np.zeros_like(u)
        return r ** (self.q - 2.0) * self.space.apply(u)

    def hessian(self, u):
        q = self.q
        n = u.shape[0]
        Bmat = np.eye(n) if self.space.is_identity else self.space.B
        r = self.space.primal_norm(u)
        if r == 0.0:
            return Bmat.copy() if q == 2.0 else np.zeros((n, n))
        Bu = self.space.apply(u)
        return r ** (q - 2.0) * Bmat + (q - 2.0) * r ** (q - 4.0) * np.outer(Bu, Bu)

    def hessian_action(self, u, h):
        q = self.q
        r = self.space.primal_norm(u)
        Bh = self.space.apply(h)
        if r == 0.0:
            return Bh if q == 2.0 else np.zeros_like(u)
        Bu = self.space.apply(u)
        return r ** (q - 2.0) * Bh + (q - 2.0) * r ** (q - 4.0) * (Bu @ h) * Bu

    def third_action(self, u, h):
        q = self.q
        r = self.space.primal_norm(u)
        if r == 0.0:
            if q == 3.0 and np.any(h):
                raise ValueError("third derivative of ||u||^3 is discontinuous at u = 0")
            return np.zeros_like(u)
        Bu = self.space.apply(u)
        Bh = self.space.apply(h)
        s = Bu @ h
        hh = h @ Bh
        return ((q - 2.0) * r ** (q - 4.0) * (2.0 * s * Bh + hh * Bu)
                + (q - 2.0) * (q - 4.0) * r ** (q - 6.0) * s * s * Bu)


class CompositePart:
    """Simple closed convex term phi: zero, weighted l1 norm, or box indicator.

    Use the constructors :meth:`zero`, :meth:`l1` and :meth:`box`.
    """

    def __init__(self, kind, weight=0.0, lower=None, upper=None):
        if kind not in ("zero", "l1", "box"):
            raise ValueError(f"unknown composite kind {kind!r}")
        if kind == "l1" and not weight > 0:
            raise ValueError("l1 weight must be positive")
        if kind == "box":
            lower = np.asarray(lower, dtype=float)
            upper = np.asarray(upper, dtype=float)
            if np.any(lower > upper):
                raise ValueError("box lower bound exceeds upper bound")
        self.kind = kind
        self.weight = float(weight)
        self.lower = lower
        self.upper = upper

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def l1(cls, weight):
        return cls("l1", weight=weight)

    @classmethod
    def box(cls, lower, upper):
        return cls("box", lower=lower, upper=upper)

    @property
    def is_zero(self):
        return self.kind == "zero"

    def contains(self, x):
        if self.kind != "box":
            return True
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def value(self, x):
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return self.weight * float(np.sum(np.abs(x)))
        return 0.0 if self.contains(x) else math.inf

    def subgradient_at(self, x):
        """Minimal-norm element of the subdifferential at ``x``."""
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "l1":
            return self.weight * np.sign(x)
        if not self.contains(x):
            raise ValueError("x is outside the box; subdifferential is empty")
        return np.zeros_like(x)

    def closest_subgradient(self, x, target):
        """Euclidean projection of ``target`` onto the subdifferential at ``x``."""
        target = np.asarray(target, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "l1":
            w = self.weight
            return np.where(x != 0.0, w * np.sign(x), np.clip(target, -w, w))
        if not self.contains(x):
            raise ValueError("x is outside the box; subdifferential is empty")
        at_lo = x == np.broadcast_to(self.lower, x.shape)
        at_hi = x == np.broadcast_to(self.upper, x.shape)
        g = np.zeros_like(x)
        g = np.where(at_lo, np.minimum(target, 0.0), g)
        g = np.where(at_hi, np.maximum(target, 0.0), g)
        return np.where(at_lo & at_hi, target, g)

    def prox(self, v, step):
        """``argmin_x step * phi(x) + ||x - v||^2 / 2`` (Euclidean)."""
        if self.kind == "zero":
            return np.array(v, dtype=float)
        if self.kind == "l1":
            t = step * self.weight
            return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
        return np.clip(v, self.lower, self.upper)

    def spec(self):
        """Compact textual description, parsed back by the bench runner."""
        if self.kind == "zero":
            return "zero"
        if self.kind == "l1":
            return f"l1:weight={self.weight!r}"
        lo = np.unique(self.lower)
        hi = np.unique(self.upper)
        if lo.size == 1 and hi.size == 1:
            return f"box:lower={float(lo[0])!r},upper={float(hi[0])!r}"
        return "box:custom"

    def __repr__(self):
        return f"CompositePart({self.spec()})"


def composite_value(f, phi, x):
    """``f(x) + phi(x)``; ``+inf`` outside the domain of phi."""
    p = 0.0 if phi is None else phi.value(x)
    if math.isinf(p):
        return math.inf
    return f.value(x) + p


def composite_gradient_mapping(f, phi, x, g_phi):
    """``grad f(x) + g_phi``, an element of the subdifferential of f + phi."""
    g = f.gradient(x)
    if phi is None or phi.is_zero:
        return g
    return g + np.asarray(g_phi, dtype=float)


@dataclass(frozen=True)
class HolderEstimate:
    nu: float
    estimated_constant: float
    sample_count: int


def _unit_directions(space, n, count, rng):
    dirs = [e for e in np.eye(n)]
    dirs.extend(rng.standard_normal((count, n)))
    return [d / space.primal_norm(d) for d in dirs]


def _ball_point(rng, n, radius, space):
    d = rng.standard_normal(n)
    d /= space.primal_norm(d)
    return radius * rng.uniform() ** (1.0 / n) * d


def estimate_holder(f, nu, samples, radius=1.0, seed=0, directions=64):
    """Sampled lower bound on the Hölder constant of ``D^p f`` with exponent ``nu``.

    The tensor-difference norm is bounded below by the largest
    ``|D^p f(x)[h]^p - D^p f(y)[h]^p|`` over the coordinate directions and
    ``directions`` random unit directions.  Directions are drawn first and the
    pairs afterwards, so a longer run extends a shorter one with the same seed.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if not 0.0 <= nu <= 1.0:
        raise ValueError("nu must lie in [0, 1]")
    n, p, space = f.dimension, f.order, f.space
    rng = np.random.default_rng(seed)
    dirs = _unit_directions(space, n, directions, rng)
    D = np.array(dirs)

    def forms(x):
        if p == 2:
            Hx = f.hessian(x)
            return np.einsum("ij,jk,ik->i", D, Hx, D)
        return np.array([f.derivative_action(x, h, p) @ h for h in dirs])

    best = 0.0
    for _ in range(samples):
        x = _ball_point(rng, n, radius, space)
        y = _ball_point(rng, n, radius, space)
        dist = space.primal_norm(x - y)
        if dist == 0.0:
            continue
        diff = float(np.max(np.abs(forms(x) - forms(y))))
        best = max(best, diff / dist ** nu)
    return HolderEstimate(nu=float(nu), estimated_constant=best, sample_count=int(samples))
