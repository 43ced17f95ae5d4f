"""Pointwise nonlinearities of the widely degenerate equation.

Every function here acts on the last axis of its input, so a single call can
evaluate a whole gradient field of shape ``(..., n)``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import InvalidInputError, ParameterError
from .quadrature import adaptive_simpson

__all__ = [
    "Params",
    "power",
    "eval_H",
    "eval_V",
    "eval_A_eps",
    "eval_A_eps_jacobian",
    "eval_g",
    "eval_g_prime",
    "eval_G",
    "eval_G_prime",
    "G_ABS_TOL",
    "G_MAX_INTERVALS",
]

G_ABS_TOL = 1e-10
G_MAX_INTERVALS = 10_000


@dataclass(frozen=True)
class Params:
    """Growth exponent ``p``, threshold shift ``delta``, regularization ``eps``
    and spatial dimension ``n``."""

    p: float
    delta: float = 0.5
    eps: float = 0.0
    n: int = 2

    def __post_init__(self):
        for name in ("p", "delta", "eps"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        if self.p < 2:
            raise ParameterError(f"p must be >= 2, got {self.p}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 <= self.eps <= 1:
            raise ParameterError(f"eps must lie in [0, 1], got {self.eps}")
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"n must be an integer >= 2, got {self.n}")


def _as_finite(x, name="input"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def _ipow(x, k):
    # binary exponentiation, k >= 0
    result = np.ones_like(x)
    base = x
    while k:
        if k & 1:
            result = result * base
        k >>= 1
        if k:
            base = base * base
    return result


def power(x, e):
    """``x**e`` for ``x >= 0``: repeated multiplication when ``e`` is a
    nonnegative integer, libm ``pow`` otherwise."""
    x = np.asarray(x, dtype=float)
    e = float(e)
    if e >= 0 and e.is_integer():
        return _ipow(x, int(e))
    return np.power(x, e)


def _norm(xi):
    return np.sqrt(np.sum(xi * xi, axis=-1))


def eval_H(xi, lam):
    """``(|xi| - 1)_+**lam * xi / |xi|``, exactly zero on ``|xi| <= 1``."""
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    xi = _as_finite(xi, "xi")
    r = _norm(xi)
    excess = r - 1.0
    active = excess > 0
    safe_r = np.where(active, r, 1.0)
    scale = np.where(active, power(np.where(active, excess, 0.0), lam) / safe_r, 0.0)
    return scale[..., None] * xi


def eval_V(xi, p):
    """``(1 + |xi|^2)**((p-2)/4) * xi``."""
    if p < 2:
        raise ParameterError(f"p must be >= 2, got {p}")
    xi = _as_finite(xi, "xi")
    w = power(1.0 + np.sum(xi * xi, axis=-1), (p - 2) / 4)
    return w[..., None] * xi


def _check_dim(xi, params):
    if xi.shape[-1] != params.n:
        raise InvalidInputError(
            f"vector length {xi.shape[-1]} does not match n={params.n}")


def eval_A_eps(xi, params):
    """Regularized flux ``H_{p-1}(xi) + eps (1+|xi|^2)^{(p-2)/2} xi``."""
    xi = _as_finite(xi, "xi")
    _check_dim(xi, params)
    out = eval_H(xi, params.p - 1)
    if params.eps:
        w = power(1.0 + np.sum(xi * xi, axis=-1), (params.p - 2) / 2)
        out = out + params.eps * w[..., None] * xi
    return out


def eval_A_eps_jacobian(xi, params):
    """Derivative of :func:`eval_A_eps`, shape ``(..., n, n)``.

    Writing ``A(xi) = phi(|xi|) xi`` the Jacobian is
    ``phi I + phi'(r)/r xi xi^T``.  On ``|xi| <= 1`` the degenerate part
    contributes the zero branch of the generalized Jacobian.
    """
    xi = _as_finite(xi, "xi")
    _check_dim(xi, params)
    p, eps = params.p, params.eps
    r = _norm(xi)
    excess = r - 1.0
    active = excess > 0
    safe_r = np.where(active, r, 1.0)
    ex = np.where(active, excess, 0.0)
    ex_pm2 = power(ex, p - 2) if p > 2 else np.where(active, 1.0, 0.0)
    ex_pm1 = ex_pm2 * ex
    phi = np.where(active, ex_pm1 / safe_r, 0.0)
    # phi'(r) / r for the degenerate part
    dphi_r = np.where(active, ((p - 1) * ex_pm2 / safe_r - ex_pm1 / safe_r**2) / safe_r, 0.0)
    if eps:
        q = 1.0 + r * r
        phi = phi + eps * power(q, (p - 2) / 2)
        if p != 2:
            dphi_r = dphi_r + eps * (p - 2) * power(q, (p - 4) / 2)
    n = xi.shape[-1]
    jac = dphi_r[..., None, None] * xi[..., :, None] * xi[..., None, :]
    idx = np.arange(n)
    jac[..., idx, idx] += phi[..., None]
    return jac


def _check_k(k):
    if not k > 1:
        raise ParameterError(f"k must be > 1, got {k}")


def eval_g(s, k):
    """``s^2 / (k + s^2)``."""
    _check_k(k)
    s = _as_finite(s, "s")
    if np.any(s < 0):
        raise InvalidInputError("s must be nonnegative")
    s2 = s * s
    return s2 / (k + s2)


def eval_g_prime(s, k):
    """``2 k s / (k + s^2)^2``."""
    _check_k(k)
    s = _as_finite(s, "s")
    if np.any(s < 0):
        raise InvalidInputError("s must be nonnegative")
    d = k + s * s
    return 2.0 * k * s / (d * d)


def _check_t(t):
    t = _as_finite(t, "t")
    if np.any(t < 0):
        raise InvalidInputError("t must be nonnegative")
    return t


def eval_G_prime(t, params):
    """Integrand of :func:`eval_G`: ``t (t+delta)^{(p-2)/2} / sqrt(1+delta+t^2)``."""
    t = _check_t(t)
    return _G_integrand(t, params.p, params.delta)


def _G_integrand(s, p, delta):
    return s * power(s + delta, (p - 2) / 2) / np.sqrt(1.0 + delta + s * s)


def eval_G(t, params, abs_tol=G_ABS_TOL, max_intervals=G_MAX_INTERVALS):
    """``int_0^t s (s+delta)^{(p-2)/2} / sqrt(1+delta+s^2) ds``.

    Closed form for ``p == 2``.  Otherwise the distinct sorted arguments are
    joined by consecutive segments, each segment is integrated by adaptive
    Simpson with a share of ``abs_tol`` proportional to its length, and the
    values are recovered by cumulative summation.  The absolute error of every
    returned value is therefore bounded by ``abs_tol`` (up to rounding).
    """
    t = _check_t(t)
    p, delta = params.p, params.delta
    if p == 2:
        c = math.sqrt(1.0 + delta)
        # sqrt(1+delta+t^2) - sqrt(1+delta) without cancellation
        return t * t / (np.sqrt(1.0 + delta + t * t) + c)
    flat = t.ravel()
    knots, inverse = np.unique(flat, return_inverse=True)
    if knots.size == 0:
        return np.zeros_like(t)
    starts = np.concatenate([[0.0], knots[:-1]])
    lengths = knots - starts
    total = knots[-1]
    if total == 0:
        return np.zeros_like(t)
    seg_tol = abs_tol * lengths / total
    segs = adaptive_simpson(
        lambda s: _G_integrand(s, p, delta), starts, knots,
        abs_tol=np.maximum(seg_tol, np.finfo(float).tiny),
        max_intervals=max_intervals)
    values = np.cumsum(segs)
    return values[inverse].reshape(t.shape)
