"""Inner solvers for the regularized models and the two scalar auxiliary problems.

* :func:`solve_model_order2` reduces stationarity of the p = 2 model to a
  one-dimensional equation in the step length, solved over a single
  eigendecomposition of the (B-scaled) Hessian.
* :func:`solve_model_generic` alternates active-set Newton and proximal
  gradient steps on the model until the certificate holds; it covers p = 3
  and composite terms.
* :func:`solve_at_coefficient` and :func:`solve_psi` serve the accelerated
  schemes (the weight equation and the estimating-function minimizer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular
from scipy.optimize import brentq

from .models import RegularizedModel, check_certificate

__all__ = [
    "SubsolverError",
    "SubsolverConfig",
    "PsiState",
    "solve_model",
    "solve_model_order2",
    "solve_model_generic",
    "solve_at_coefficient",
    "solve_psi",
    "psi_stationarity_residual",
]

_EPS = np.finfo(float).eps


class SubsolverError(RuntimeError):
    """Raised when an inner solve cannot produce a certified point."""


def _failure(message, cert):
    return SubsolverError(f"{message}: residual {cert.model_grad_plus_subgrad_norm:.3e}"
                          f" vs bound {cert.gradient_bound:.3e}")


@dataclass(frozen=True)
class SubsolverConfig:
    theta: float = 1e-2
    max_inner_iterations: int = 50000
    inner_tolerance: float = 1e-15
    radial_tolerance: float = 1e-15

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be at least 1")
        if not (self.inner_tolerance > 0 and self.radial_tolerance > 0):
            raise ValueError("tolerances must be positive")


def _root(fun, lo, hi, rtol):
    return brentq(fun, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * _EPS), maxiter=500)


def _grow_upper(fun, start):
    hi = start
    for _ in range(2000):
        if fun(hi) < 0:
            return hi
        hi *= 2.0
    raise SubsolverError("could not bracket the radial root")


def solve_model_order2(spec, f, cfg, model=None, center_value=None):
    """Certified minimizer of the p = 2 model without composite term.

    Stationarity ``(G + tau B) h = -g`` with ``tau = H (2 + alpha) / 2 * r^alpha``
    and ``r = ||h||`` is solved as a monotone equation in r.  When G is
    indefinite the root is searched for ``tau > -lambda_min``; the hard case is
    completed along the leftmost eigenvector.

    Returns ``(x_plus, certificate)``.
    """
    if spec.order != 2:
        raise ValueError("solve_model_order2 needs an order-2 model")
    if spec.composite is not None and not spec.composite.is_zero:
        raise ValueError("solve_model_order2 does not handle composite terms")
    model = RegularizedModel(spec, f) if model is None else model
    space = f.space
    alpha = spec.alpha
    c = spec.reg_constant * (2.0 + alpha) / 2.0
    G, g = model.G, model.g0
    if space.is_identity:
        L = None
        Gt, wt = G, g
    else:
        L = cholesky(space.B, lower=True)
        Gt = solve_triangular(L, solve_triangular(L, G, lower=True).T, lower=True).T
        wt = solve_triangular(L, g, lower=True)
    lam, Q = eigh(0.5 * (Gt + Gt.T))
    beta = Q.T @ wt
    lam_min = float(lam[0])

    def step_from(zeta):
        z = Q @ zeta
        return z if L is None else solve_triangular(L.T, z, lower=False)

    if not np.any(beta):
        zeta = np.zeros_like(beta)
    elif alpha == 0.0:
        d = lam + c
        if np.min(d) <= 0:
            raise SubsolverError("model Hessian plus regularization is not positive definite; "
                                 "increase the regularization constant")
        zeta = -beta / d
    else:
        tau_low = max(0.0, -lam_min)
        r_low = (tau_low / c) ** (1.0 / alpha)
        scale = max(1.0, float(np.max(np.abs(lam))))
        degenerate = np.abs(lam - lam_min) <= 1e-14 * scale

        def psi(r):
            tau = c * r ** alpha
            with np.errstate(over="ignore", divide="ignore"):
                return math.sqrt(float(np.sum((beta / (lam + tau)) ** 2))) - r

        hard = False
        if tau_low > 0 or lam_min <= 0:
            on_min = float(np.sum(beta[degenerate] ** 2))
            if on_min <= (1e-14 * np.linalg.norm(beta)) ** 2:
                rest = ~degenerate
                denom = lam[rest] + tau_low
                base = np.zeros_like(beta)
                base[rest] = -beta[rest] / denom
                if np.linalg.norm(base) <= r_low:
                    hard = True
                    extra = math.sqrt(max(r_low ** 2 - float(base @ base), 0.0))
                    idx = int(np.flatnonzero(degenerate)[0])
                    base[idx] = extra
                    zeta = base
        if not hard:
            lo = r_low if r_low > 0 else 0.0
            # psi is decreasing on (r_low, inf); psi(lo+) > 0 outside the hard case
            probe = lo + max(lo, 1.0) * 1e-300 if lo > 0 else 1e-300
            while psi(probe) <= 0 and probe > lo:
                probe = lo + (probe - lo) * 1e-3 if lo > 0 else probe * 1e-3
                if probe == lo or probe == 0.0:
                    break
            start = max(2.0 * probe, float(np.linalg.norm(beta)) / max(abs(lam_min) + c, 1e-300))
            hi = _grow_upper(psi, max(start, 1e-300))
            r = _root(psi, probe, hi, cfg.radial_tolerance)
            zeta = -beta / (lam + c * r ** alpha)
    h = step_from(zeta)
    x_plus = model.x + h
    cert = check_certificate(spec, f, x_plus, None, cfg.theta, center_value=center_value,
                             model=model)
    if not cert.accepted and cert.value_ok:
        # rounding in the eigenbasis; polish with Newton steps on the model
        try:
            return solve_model_generic(spec, f, None, cfg, model=model,
                                       center_value=center_value, x_start=x_plus)
        except SubsolverError:
            pass
    if not cert.accepted:
        raise _failure(f"order-2 model solve not certified (model value "
                       f"{cert.model_value_at_candidate!r} vs center {cert.center_value!r})", cert)
    return x_plus, cert


def _face(phi, x, g):
    """Free coordinates, the fixed composite slope on them and the reduced
    gradient, for an active-set Newton step at ``x`` with model gradient ``g``."""
    if phi is None:
        return np.ones(x.shape, dtype=bool), np.zeros_like(x)
    if phi.kind == "box":
        lo = np.broadcast_to(phi.lower, x.shape)
        hi = np.broadcast_to(phi.upper, x.shape)
        blocked = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        return ~blocked, np.zeros_like(x)
    w = phi.weight
    sign = np.sign(x)
    enter = (x == 0.0) & (np.abs(g) > w)
    sign = np.where(enter, -np.sign(g), sign)
    return sign != 0.0, w * sign


def _onto_face(phi, x_new, sign):
    if phi is None:
        return x_new
    if phi.kind == "box":
        return np.clip(x_new, phi.lower, phi.upper)
    # stay in the orthant selected by ``sign``
    return np.where(sign * x_new > 0.0, x_new, 0.0)


def _newton_direction(Hm, r):
    """Solve ``Hm d = -r``, shifting ``Hm`` when it is not positive definite."""
    Hm = 0.5 * (Hm + Hm.T)
    scale = max(float(np.max(np.abs(Hm))), 1e-300)
    shift = 0.0
    for _ in range(60):
        try:
            c = np.linalg.cholesky(Hm + shift * np.eye(Hm.shape[0]))
        except np.linalg.LinAlgError:
            shift = max(2.0 * shift, 1e-12 * scale)
            continue
        y = solve_triangular(c, -r, lower=True)
        d = solve_triangular(c.T, y, lower=False)
        # a vanishing Hessian gives a useless, possibly overflowing step
        return d if np.all(np.isfinite(d)) else None
    return None


def solve_model_generic(spec, f, phi, cfg, model=None, center_value=None, x_start=None):
    """Certified approximate minimizer of the (composite) model.

    Each inner iteration first tries an active-set Newton step (the face of
    ``phi`` is frozen: bounds for a box, signs for l1) with a backtracking
    search on the model value, and falls back to a proximal gradient step
    when that fails to decrease the model.  The loop starts at the center
    (or ``x_start``) and stops as soon as the certificate holds.

    The subgradient selection reported in the certificate is the element of
    ``partial phi(x_plus)`` closest to ``-grad Omega(x_plus)``.

    Returns ``(x_plus, certificate)``.
    """
    if phi is not None and phi.is_zero:
        phi = None
    if phi is not None and not f.space.is_identity:
        raise ValueError("composite terms require the identity metric")
    if spec.composite is not phi:
        spec = replace(spec, composite=phi)
        model = None
    model = RegularizedModel(spec, f) if model is None else model
    space = f.space
    theta = cfg.theta
    x_c = model.x
    if center_value is None:
        center_value = model.f0 + (0.0 if phi is None else phi.value(x_c))

    def certify(x):
        gm = model.gradient(x)
        g_phi = None if phi is None else phi.closest_subgradient(x, -gm)
        return check_certificate(spec, f, x, g_phi, theta, center_value=center_value,
                                 model=model)

    def prox(v, step):
        return v if phi is None else phi.prox(v, step)

    x = x_c.copy() if x_start is None else np.array(x_start, dtype=float)
    if phi is not None and not phi.contains(x):
        x = prox(x, 1.0)
    cert = certify(x)
    if cert.accepted:
        return x, cert
    fx = model.full_value(x)
    L = max(float(np.linalg.norm(model.G, 2)), 1e-8)
    if not space.is_identity:
        L = L / max(float(np.min(np.linalg.eigvalsh(space.B))), 1e-300)
    for _ in range(cfg.max_inner_iterations):
        g = model.gradient(x)
        free, slope = _face(phi, x, g)
        res = cert.model_grad_plus_subgrad_norm
        x_new = None
        if np.any(free):
            r = (g + slope)[free]
            Hm = model.hessian(x)[np.ix_(free, free)]
            d = _newton_direction(Hm, r)
            if d is not None:
                decrease = -float(r @ d)
                t = 1.0
                for _ in range(50):
                    trial = x.copy()
                    trial[free] = x[free] + t * d
                    trial = _onto_face(phi, trial, np.sign(slope) if phi is not None
                                       and phi.kind == "l1" else None)
                    f_trial = model.full_value(trial)
                    if f_trial <= fx - 1e-4 * t * max(decrease, 0.0):
                        x_new = trial
                        break
                    if f_trial <= center_value:
                        # decreases below rounding of the model value are
                        # invisible; progress is judged by the residual
                        c_trial = certify(trial)
                        if c_trial.model_grad_plus_subgrad_norm < res:
                            x_new = trial
                            break
                    t *= 0.5
        if x_new is None:
            # proximal gradient fallback with backtracking
            direction = space.solve(g)
            vx = model.value(x)
            for _ in range(200):
                trial = prox(x - direction / L, 1.0 / L)
                step = trial - x
                quad = vx + g @ step + 0.5 * L * space.primal_norm(step) ** 2
                if model.value(trial) <= quad + 1e-15 * abs(quad):
                    break
                L *= 2.0
            else:
                raise SubsolverError("backtracking failed to find a sufficient-decrease step")
            f_trial = model.full_value(trial)
            if f_trial <= fx:
                x_new = trial
            L = max(L / 2.0, 1e-12)
        if x_new is None or np.array_equal(x_new, x):
            raise _failure("inner loop stalled before the certificate held", cert)
        x = x_new
        fx = model.full_value(x)
        cert = certify(x)
        if cert.accepted:
            return x, cert
    raise _failure("inner iteration budget exhausted", cert)


def solve_model(spec, f, phi, cfg, model=None, center_value=None):
    """Dispatch to the exact order-2 solver when applicable, else the generic loop."""
    smooth = phi is None or phi.is_zero
    if spec.order == 2 and smooth:
        return solve_model_order2(spec, f, cfg, model=model, center_value=center_value)
    return solve_model_generic(spec, f, phi, cfg, model=model, center_value=center_value)


def solve_at_coefficient(A_t, M, p, q, radial_tolerance=1e-15):
    """Positive root ``a`` of ``a^q = (p-1)! / (2^(3p-1) M) * (A_t + a)^(q-1)``."""
    if not M > 0:
        raise ValueError("M must be positive")
    if p < 2:
        raise ValueError("p must be at least 2")
    if A_t < 0:
        raise ValueError("A_t must be nonnegative")
    c = math.factorial(p - 1) / (2.0 ** (3 * p - 1) * M)
    if A_t == 0:
        return c
    logc = math.log(c)

    def g(a):
        return q * math.log(a) - (q - 1.0) * math.log(A_t + a) - logc

    # a^q / (A+a)^(q-1) <= a, so the root is at least c
    lo = c
    if g(lo) >= 0.0:
        # A_t is negligible next to c: the root rounds to c
        return c
    hi = _grow_upper(lambda a: -g(a), max(2.0 * c, c + A_t))
    a = _root(g, lo, hi, radial_tolerance)
    for _ in range(2):
        res = a ** q - c * (A_t + a) ** (q - 1.0)
        der = q * a ** (q - 1.0) - c * (q - 1.0) * (A_t + a) ** (q - 2.0)
        if der > 0:
            a_new = a - res / der
            if a_new > 0 and abs(a_new ** q - c * (A_t + a_new) ** (q - 1.0)) <= abs(res):
                a = a_new
    return a


@dataclass
class PsiState:
    """Estimating function
    ``psi(x) = ||x - x0||^q / q + <c, x> + constant + A * phi(x)``."""

    anchor: np.ndarray
    q: float
    linear: np.ndarray
    constant: float = 0.0
    composite_weight: float = 0.0

    @classmethod
    def initial(cls, x0, q):
        x0 = np.asarray(x0, dtype=float)
        if q <= 1:
            raise ValueError("q must exceed 1")
        return cls(anchor=x0.copy(), q=float(q), linear=np.zeros_like(x0))

    def add_linearization(self, weight, value, grad, point, composite=False):
        """Add ``weight * [value + <grad, x - point> (+ phi(x))]``."""
        self.linear = self.linear + weight * grad
        self.constant += weight * (value - float(grad @ point))
        if composite:
            self.composite_weight += weight

    def value(self, x, space, phi=None):
        r = space.primal_norm(x - self.anchor)
        val = r ** self.q / self.q + float(self.linear @ x) + self.constant
        if phi is not None and self.composite_weight > 0:
            val += self.composite_weight * phi.value(x)
        return val

    def copy(self):
        return PsiState(self.anchor.copy(), self.q, self.linear.copy(), self.constant,
                        self.composite_weight)


def solve_psi(state, space, phi=None):
    """Minimizer of the estimating function ``state``."""
    x0, c, q = state.anchor, state.linear, state.q
    A = state.composite_weight
    if phi is None or phi.is_zero or A == 0:
        cn = space.dual_norm(c)
        if cn == 0.0:
            return x0.copy()
        t = cn ** (1.0 / (q - 1.0))
        return x0 - t * space.solve(c) / cn
    if not space.is_identity:
        raise ValueError("composite estimating functions require the identity metric")

    def point(tau):
        return phi.prox(x0 - c / tau, A / tau)

    if q == 2.0:
        return point(1.0)

    def gap(r):
        return float(np.linalg.norm(point(r ** (q - 2.0)) - x0)) - r

    hi = 1.0
    while gap(hi) >= 0:
        hi *= 2.0
        if hi > 1e300:
            raise SubsolverError("estimating-function root not bracketed")
    lo = min(hi, 1.0)
    while gap(lo) < 0:
        lo *= 0.5
        if lo < 1e-300:
            return x0.copy() if phi.contains(x0) else point(1.0)
    if lo == hi:
        lo = hi / 2.0
    r = _root(gap, lo, hi, 4 * _EPS)
    return point(r ** (q - 2.0))


def psi_stationarity_residual(state, space, x, phi=None):
    """Distance from ``0`` to the subdifferential of ``psi`` at ``x``."""
    u = x - state.anchor
    r = space.primal_norm(u)
    g = (r ** (state.q - 2.0) * space.apply(u) if r > 0 else np.zeros_like(u)) + state.linear
    if phi is not None and not phi.is_zero and state.composite_weight > 0:
        A = state.composite_weight
        g = g + A * phi.closest_subgradient(x, -g / A)
    return space.dual_norm(g)
