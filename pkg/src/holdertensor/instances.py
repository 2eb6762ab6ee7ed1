"""Test functions: the worst-case chain family and a small zoo of convex oracles.

The chain function of length k on R^n is

    f_k(x) = (1/q) [ sum_{i<k} |x_i - x_{i+1}|^q + sum_{i>=k} |x_i|^q ] - x_1,

with ``q = p + nu`` (1-indexed coordinates), i.e. ``eta(A_k x) - x_1`` where
``A_k`` takes consecutive differences on the first k - 1 coordinates and is
the identity afterwards.  Starting from the origin, methods whose steps stay
in the span of the derivatives can only switch on one new coordinate per
oracle call, which keeps the gradient norm large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .metric import MetricSpace, as_vector
from .oracle import PowerNorm, SmoothOracle
from .schemes import C_p_nu

__all__ = [
    "HardInstance",
    "SubspaceReport",
    "hard_value_grad",
    "hard_derivative_action",
    "gradient_lower_bound_check",
    "subspace_growth_report",
    "zoo",
    "ZOO_NAMES",
    "SAMPLING_RADII",
]

SAMPLING_RADII = (0.1, 1.0, 10.0)
ZOO_NAMES = ("quadratic", "power_norm", "log_sum_exp", "hard")


@dataclass(frozen=True)
class HardInstance:
    """Chain function ``f_k`` on R^n with smoothness order p and exponent nu."""

    n: int
    k: int
    p: int = 2
    nu: float = 1.0

    def __post_init__(self):
        if not 2 <= self.k <= self.n:
            raise ValueError("k must lie in [2, n]")
        if self.p < 1:
            raise ValueError("p must be positive")
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError("nu must lie in [0, 1]")

    @property
    def q(self):
        return self.p + self.nu

    @property
    def f_star(self):
        return -(self.q - 1.0) * self.k / self.q

    @property
    def holder_constant(self):
        return 2.0 ** ((2.0 + self.nu) / 2.0) * math.prod(self.q - i for i in range(1, self.p))

    @property
    def holder_constant_bound(self):
        """A provable Hölder constant of ``D^p f_k``.

        ``D^p f_k(x) = D^p eta(A x)[A .]^p`` with ``||A|| <= 2``, and the
        coordinate terms ``|u|^q / q`` have ``p``-th derivatives
        ``prod(q - i) |u|^nu`` (times ``sign(u)`` for odd p), whose Hölder
        constant is 1 (``2^(1-nu)`` for odd p).  The declared
        :attr:`holder_constant` is smaller and is exceeded, for example, at
        ``x = t (e1 - e2)``, ``y = 0``.
        """
        sign_factor = 2.0 ** (1.0 - self.nu) if self.p % 2 else 1.0
        return 2.0 ** self.q * sign_factor * math.prod(self.q - i for i in range(1, self.p))

    @property
    def minimizer_norm_bound(self):
        return (self.k + 1) ** 1.5 / math.sqrt(3.0)

    def apply_A(self, x):
        u = np.array(x, dtype=float)
        k = self.k
        u[: k - 1] = x[: k - 1] - x[1:k]
        return u

    def apply_At(self, w):
        out = np.array(w, dtype=float)
        k = self.k
        out[1:k] -= w[: k - 1]
        return out

    def matrix_A(self):
        return np.array([self.apply_A(e) for e in np.eye(self.n)]).T

    def oracle(self, order=None):
        """The instance as a :class:`SmoothOracle` of order ``p`` (or ``order``)."""
        order = self.p if order is None else order
        if order not in (2, 3):
            raise ValueError("oracles support orders 2 and 3 only")
        declared = order == self.p
        A = self.matrix_A()
        q = self.q

        def hessian(x):
            d = (q - 1.0) * np.abs(self.apply_A(x)) ** (q - 2.0)
            return (A.T * d) @ A

        return SmoothOracle(
            lambda x: hard_value_grad(self, x)[0],
            lambda x: hard_value_grad(self, x)[1],
            lambda x, h, i: hard_derivative_action(self, x, h, i),
            order,
            dimension=self.n,
            hessian=hessian,
            holder_nu=self.nu if declared else None,
            holder_constant=self.holder_constant if declared else None,
            name=f"hard(k={self.k},p={self.p},nu={self.nu!r})",
            info={"f_star": self.f_star, "minimizer_norm_bound": self.minimizer_norm_bound,
                  "holder_constant_bound": self.holder_constant_bound},
        )


def hard_value_grad(inst, x):
    """Value and gradient of the chain function."""
    x = as_vector(x, inst.n)
    q = inst.q
    u = inst.apply_A(x)
    au = np.abs(u)
    value = float(np.sum(au ** q)) / q - x[0]
    grad = inst.apply_At(au ** (q - 1.0) * np.sign(u))
    grad[0] -= 1.0
    return value, grad


def hard_derivative_action(inst, x, h, order):
    """``D^i f_k(x)[h]^(i-1)`` for ``i`` in ``{2, 3}``."""
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    q = inst.q
    if q < order:
        raise ValueError(f"derivative of order {order} does not exist for q={q}")
    x = as_vector(x, inst.n)
    h = as_vector(h, inst.n, "h")
    u = inst.apply_A(x)
    w = inst.apply_A(h)
    au = np.abs(u)
    if order == 2:
        return inst.apply_At((q - 1.0) * au ** (q - 2.0) * w)
    if q == 3.0 and np.any((u == 0.0) & (w != 0.0)):
        raise ValueError("third derivative jumps where a difference vanishes (q = 3)")
    coef = (q - 1.0) * (q - 2.0) * au ** (q - 3.0) * np.sign(u)
    return inst.apply_At(coef * w * w)


def _sphere(rng, dim, radius):
    d = rng.standard_normal(dim)
    return radius * d / np.linalg.norm(d)


def gradient_lower_bound_check(inst, k_sub, samples=1000, seed=0):
    """Smallest gradient norm of ``f_k`` over sampled points whose
    coordinates beyond ``k_sub`` vanish.

    Points lie on spheres of radii 0.1, 1 and 10 (cycled); the origin is
    always included.  The contract is ``result >= 1 / sqrt(k_sub + 1)``.
    """
    if not 1 <= k_sub <= inst.k - 2:
        raise ValueError("k_sub must lie in [1, k - 2]")
    if inst.k + 1 > inst.n:
        raise ValueError("the check needs k + 1 <= n")
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    best = np.linalg.norm(hard_value_grad(inst, np.zeros(inst.n))[1])
    for s in range(samples):
        x = np.zeros(inst.n)
        x[:k_sub] = _sphere(rng, k_sub, SAMPLING_RADII[s % len(SAMPLING_RADII)])
        best = min(best, float(np.linalg.norm(hard_value_grad(inst, x)[1])))
    return float(best)


@dataclass(frozen=True)
class SubspaceReport:
    index: int
    leakage: float


def subspace_growth_report(inst, points):
    """Coordinate leakage of a sequence of points started at the origin.

    For the point with index t the leakage is the largest absolute value of
    the 1-indexed coordinates ``j > t + 1``.  ``points`` is a trace (its
    iterates are used) or any sequence of vectors.
    """
    seq = getattr(points, "iterates", points)
    out = []
    for t, x in enumerate(seq):
        x = as_vector(x, inst.n)
        tail = x[t + 1:]
        out.append(SubspaceReport(t, float(np.max(np.abs(tail))) if tail.size else 0.0))
    return out


# --------------------------------------------------------------------------- zoo


def _quadratic(n, p, nu, Q=None, b=None):
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    b = np.zeros(n) if b is None else as_vector(b, n, "b")
    if Q.shape != (n, n) or np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
        raise ValueError("Q must be a symmetric (n, n) matrix")
    lam = np.linalg.eigvalsh(Q)
    if lam[0] <= 0:
        raise ValueError("Q must be positive definite")
    x_star = np.linalg.solve(Q, b)
    info = {"x_star": x_star, "f_star": float(-0.5 * b @ x_star), "lambda_min": float(lam[0])}

    def action(x, h, i):
        return Q @ h if i == 2 else np.zeros(n)

    return SmoothOracle(lambda x: 0.5 * float(x @ Q @ x) - float(b @ x), lambda x: Q @ x - b,
                        action, p, dimension=n, hessian=lambda x: Q.copy(),
                        holder_nu=1.0 if nu is None else nu, holder_constant=0.0,
                        name="quadratic", info=info)


def _power_norm(n, p, nu, degree=3.0, center=None):
    degree = float(degree)
    if degree < p:
        raise ValueError("degree must be at least p")
    c = np.zeros(n) if center is None else as_vector(center, n, "center")
    space = MetricSpace(n)
    pw = PowerNorm(space, degree)
    own_nu = degree - p
    declared = 0.0 <= own_nu <= 1.0
    if nu is not None and (not declared or abs(nu - own_nu) > 1e-15):
        raise ValueError(f"power_norm of degree {degree} has nu = degree - p = {own_nu}")

    def action(x, h, i):
        u = x - c
        return pw.hessian_action(u, h) if i == 2 else pw.third_action(u, h)

    return SmoothOracle(lambda x: pw.value(x - c), lambda x: pw.gradient(x - c), action, p,
                        space=space, hessian=lambda x: pw.hessian(x - c),
                        holder_nu=own_nu if declared else None,
                        holder_constant=C_p_nu(p, own_nu) / degree if declared else None,
                        name=f"power_norm(degree={degree!r})",
                        info={"x_star": c.copy(), "f_star": 0.0})


def _log_sum_exp(n, p, nu, scale=1.0):
    s = float(scale)
    if not s > 0:
        raise ValueError("scale must be positive")
    if nu is not None:
        raise ValueError("log_sum_exp declares no Hölder data")

    def parts(x):
        u = np.concatenate([x, -x]) / s
        return u, softmax(u)

    def lift(v):
        return v[:n] - v[n:]

    def value(x):
        u, _ = parts(x)
        return s * float(logsumexp(u))

    def gradient(x):
        return lift(parts(x)[1])

    def action(x, h, i):
        _, pi = parts(x)
        w = np.concatenate([h, -h])
        wbar = pi @ w
        if i == 2:
            return lift(pi * (w - wbar)) / s
        dev = (w - wbar) ** 2
        return lift(pi * (dev - pi @ dev)) / (s * s)

    def hessian(x):
        _, pi = parts(x)
        a, b = pi[:n], pi[n:]
        d = a - b
        return (np.diag(a + b) - np.outer(d, d)) / s

    return SmoothOracle(value, gradient, action, p, dimension=n, hessian=hessian,
                        name=f"log_sum_exp(scale={s!r})",
                        info={"x_star": np.zeros(n), "f_star": s * math.log(2 * n)})


def _hard(n, p, nu, k=None):
    k = n if k is None else int(k)
    inst = HardInstance(n, k, p, 1.0 if nu is None else nu)
    return inst.oracle()


def zoo(name, n, p=2, nu=None, **params):
    """Build a zoo oracle by name.

    Parameters
    ----------
    name : {"quadratic", "power_norm", "log_sum_exp", "hard"}
        ``quadratic`` takes ``Q`` and ``b`` (``f = <Qx, x>/2 - <b, x>``);
        ``power_norm`` takes ``degree`` and ``center`` (``f = ||x - c||^d / d``);
        ``log_sum_exp`` takes ``scale``; ``hard`` takes ``k``.
    n : int
        Dimension.
    p : int
        Oracle order (2 or 3).
    nu : float, optional
        Exponent to declare; must agree with what the function admits.
    """
    builders = {"quadratic": _quadratic, "power_norm": _power_norm,
                "log_sum_exp": _log_sum_exp, "hard": _hard}
    if name not in builders:
        raise ValueError(f"unknown zoo function {name!r}; choose from {ZOO_NAMES}")
    return builders[name](int(n), int(p), nu, **params)
