"""Euclidean structure on R^n given by a symmetric positive definite operator B.

Primal vectors are measured with ``||x|| = <Bx, x>^(1/2)`` and dual vectors
(gradients) with ``||s||_* = <s, B^{-1} s>^(1/2)``.  Vectors are plain
``numpy`` arrays; the space object only carries ``B`` and its factorization.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "MetricSpace",
    "primal_norm",
    "dual_norm",
    "gradient_check",
    "derivative_action_check",
    "as_vector",
]


def as_vector(x, n=None, name="x"):
    """Return ``x`` as a finite 1-D float array, optionally checking its length."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


class MetricSpace:
    """R^n with the norm induced by ``B``.

    Parameters
    ----------
    dimension : int
        Ambient dimension n.
    B : array_like, optional
        Dense symmetric positive definite (n, n) matrix.  ``None`` means the
        identity, which skips all linear algebra.
    """

    def __init__(self, dimension, B=None):
        n = int(dimension)
        if n < 1:
            raise ValueError("dimension must be positive")
        self.dimension = n
        if B is None:
            self.B = None
            self._chol = None
            return
        B = np.array(B, dtype=float)
        if B.shape != (n, n):
            raise ValueError(f"B has shape {B.shape}, expected {(n, n)}")
        scale = max(np.max(np.abs(B)), np.finfo(float).tiny)
        if np.max(np.abs(B - B.T)) > 1e-12 * scale:
            raise ValueError("B is not symmetric")
        try:
            self._chol = cho_factor(B, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError("B is not positive definite") from exc
        B.setflags(write=False)
        self.B = B

    @property
    def is_identity(self):
        return self.B is None

    def apply(self, x):
        """Return ``Bx`` (primal to dual)."""
        return x.copy() if self.B is None else self.B @ x

    def solve(self, s):
        """Return ``B^{-1}s`` (dual to primal)."""
        return s.copy() if self.B is None else cho_solve(self._chol, s)

    def primal_norm(self, x):
        x = as_vector(x, self.dimension)
        if self.B is None:
            return float(np.sqrt(x @ x))
        return float(np.sqrt(max(x @ (self.B @ x), 0.0)))

    def dual_norm(self, s):
        s = as_vector(s, self.dimension, "s")
        if self.B is None:
            return float(np.sqrt(s @ s))
        return float(np.sqrt(max(s @ cho_solve(self._chol, s), 0.0)))

    def __repr__(self):
        kind = "identity" if self.B is None else "dense"
        return f"MetricSpace(dimension={self.dimension}, B={kind})"


def primal_norm(space, x):
    return space.primal_norm(x)


def dual_norm(space, s):
    return space.dual_norm(s)


def _relative_error(a, b):
    # floor of 1 in the scale: absolute error for small entries
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return np.abs(a - b) / scale


def gradient_check(oracle, x, step=1e-5):
    """Largest coordinate-wise discrepancy between ``oracle.gradient`` and
    central differences of ``oracle.value``.

    The error of coordinate i is ``|g_i - d_i| / max(|g_i|, |d_i|, 1)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = as_vector(x)
    g = np.asarray(oracle.gradient(x), dtype=float)
    fd = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = step
        fd[i] = (oracle.value(x + e) - oracle.value(x - e)) / (2.0 * step)
    return float(np.max(_relative_error(g, fd)))


def derivative_action_check(oracle, x, h, order, step=1e-5):
    """Compare ``D^i f(x)[h]^{i-1}`` with a central difference of the
    ``(i-1)``-th action along ``h``.

    Returns the largest coordinate-wise discrepancy, scaled as in
    :func:`gradient_check`.
    """
    if not 2 <= order <= oracle.order:
        raise ValueError(f"order must lie in [2, {oracle.order}], got {order}")
    if step <= 0:
        raise ValueError("step must be positive")
    x = as_vector(x)
    h = as_vector(h, x.shape[0], "h")
    action = np.asarray(oracle.derivative_action(x, h, order), dtype=float)
    if not np.any(h):
        return float(np.max(np.abs(action))) if action.size else 0.0

    def lower(z):
        if order == 2:
            return oracle.gradient(z)
        return oracle.derivative_action(z, h, order - 1)

    fd = (np.asarray(lower(x + step * h)) - np.asarray(lower(x - step * h))) / (2.0 * step)
    return float(np.max(_relative_error(action, fd)))
