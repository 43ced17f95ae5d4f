"""Both sides of the algebraic inequalities behind the regularity estimates.

Each ``*_gap`` function takes batches of vectors (shape ``(N, n)``) and returns
a :class:`GapSample` whose ``gap`` is oriented so that ``gap >= 0`` means the
inequality holds at that sample.  Inequalities whose constant is not explicit
take it as an argument; :func:`calibrate_constant` produces one from a
calibration sample.
"""

from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
import csv
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidInputError, ParameterError, PreconditionError
from .flux import Params, eval_G, eval_g, eval_g_prime, eval_H, eval_V, power

__all__ = [
    "GapSample",
    "GAP_RTOL",
    "brasco_monotonicity_gap",
    "brasco_lipschitz_gap",
    "bogelein_upper_ratio",
    "bogelein_upper_gap",
    "bogelein_lower_gap",
    "lindqvist_ratios",
    "lindqvist_gap",
    "young_type_gap",
    "gk_prime_profile",
    "gk_prime_bound",
    "gh_comparison_gap",
    "compute_c_p_delta",
    "c_p_delta_equation",
    "lower_shift",
    "certify_G_bounds",
    "interpolation_check",
    "calibrate_constant",
    "sample_vectors",
    "sample_pairs",
    "LemmaRow",
    "LEMMA_IDS",
    "run_lemma_suite",
    "write_lemma_csv",
]

GAP_RTOL = 1e-12


@dataclass
class GapSample:
    """Batch of evaluations of one inequality.

    ``lhs`` and ``rhs`` are the two sides as written; ``gap`` is ``rhs - lhs``
    for upper bounds and ``lhs - rhs`` for lower bounds, so that nonnegative
    values always mean the inequality holds.  ``constant`` records the
    constant used, when the inequality has one.
    """

    tag: str
    lhs: np.ndarray
    rhs: np.ndarray
    gap: np.ndarray
    inputs: dict = field(default_factory=dict)
    constant: float = float("nan")

    @property
    def scale(self):
        return np.maximum(1.0, np.maximum(np.abs(self.lhs), np.abs(self.rhs)))

    @property
    def normalized_gap(self):
        return np.asarray(self.gap) / self.scale

    def min_gap(self):
        """Smallest gap divided by ``max(1, |lhs|, |rhs|)``."""
        g = self.normalized_gap
        return float(np.min(g)) if np.size(g) else float("inf")

    def holds(self, rtol=GAP_RTOL):
        return self.min_gap() >= -rtol


def _vec(x, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return x


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


def _dot(x, y):
    return np.sum(x * y, axis=-1)


def _check_p(p):
    if not p >= 2:
        raise ParameterError(f"p must be >= 2, got {p}")


# -- Brasco-type inequalities -------------------------------------------------

def brasco_monotonicity_gap(xi, eta, p):
    """``<H_{p-1}(xi)-H_{p-1}(eta), xi-eta> >= 4/p^2 |H_{p/2}(xi)-H_{p/2}(eta)|^2``."""
    _check_p(p)
    xi, eta = _vec(xi, "xi"), _vec(eta, "eta")
    lhs = _dot(eval_H(xi, p - 1) - eval_H(eta, p - 1), xi - eta)
    dh = eval_H(xi, p / 2) - eval_H(eta, p / 2)
    rhs = 4.0 / p**2 * _dot(dh, dh)
    return GapSample("brasco_monotonicity", lhs=lhs, rhs=rhs, gap=lhs - rhs,
                     inputs={"xi": xi, "eta": eta, "p": p}, constant=4.0 / p**2)


def brasco_lipschitz_gap(xi, eta, p):
    """``|H_{p-1}(xi)-H_{p-1}(eta)| <= (p-1)(|H_{p/2}(xi)|^{(p-2)/p}
    + |H_{p/2}(eta)|^{(p-2)/p}) |H_{p/2}(xi)-H_{p/2}(eta)|``."""
    _check_p(p)
    xi, eta = _vec(xi, "xi"), _vec(eta, "eta")
    lhs = _norm(eval_H(xi, p - 1) - eval_H(eta, p - 1))
    hx, he = eval_H(xi, p / 2), eval_H(eta, p / 2)
    e = (p - 2) / p
    weight = power(_norm(hx), e) + power(_norm(he), e)
    rhs = (p - 1) * weight * _norm(hx - he)
    return GapSample("brasco_lipschitz", lhs=lhs, rhs=rhs, gap=rhs - lhs,
                     inputs={"xi": xi, "eta": eta, "p": p}, constant=p - 1)


# -- Boegelein-type inequalities (|xi| > 1) -----------------------------------

def _require_outside_unit_ball(xi):
    if np.any(_norm(xi) <= 1.0):
        raise PreconditionError("requires |xi| > 1 for every sample")


def bogelein_upper_ratio(xi, eta, p):
    """``|H_{p-1}(xi)-H_{p-1}(eta)|`` divided by the constant-free right side
    ``[(|xi|-1)+(|eta|-1)_+]^{p-1} |xi-eta| / (|xi|-1)``; zero where ``xi = eta``."""
    _check_p(p)
    xi, eta = _vec(xi, "xi"), _vec(eta, "eta")
    _require_outside_unit_ball(xi)
    lhs, base = _bogelein_upper_sides(xi, eta, p)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(base > 0, lhs / np.where(base > 0, base, 1.0), 0.0)


def _bogelein_upper_sides(xi, eta, p):
    rx, re = _norm(xi), _norm(eta)
    lhs = _norm(eval_H(xi, p - 1) - eval_H(eta, p - 1))
    a = rx - 1.0
    base = power(a + np.maximum(re - 1.0, 0.0), p - 1) / a * _norm(xi - eta)
    return lhs, base


def bogelein_upper_gap(xi, eta, p, c):
    """``|H_{p-1}(xi)-H_{p-1}(eta)| <= c [(|xi|-1)+(|eta|-1)_+]^{p-1}/(|xi|-1) |xi-eta|``."""
    _check_p(p)
    xi, eta = _vec(xi, "xi"), _vec(eta, "eta")
    _require_outside_unit_ball(xi)
    lhs, base = _bogelein_upper_sides(xi, eta, p)
    rhs = c * base
    return GapSample("bogelein_upper", lhs=lhs, rhs=rhs, gap=rhs - lhs,
                     inputs={"xi": xi, "eta": eta, "p": p}, constant=c)


def bogelein_lower_gap(xi, eta, p):
    """``<H_{p-1}(eta)-H_{p-1}(xi), eta-xi> >= min(1,p-1)/2^{p+1}
    (|xi|-1)^p / (|xi|(|xi|+|eta|)) |eta-xi|^2``."""
    _check_p(p)
    xi, eta = _vec(xi, "xi"), _vec(eta, "eta")
    _require_outside_unit_ball(xi)
    rx, re = _norm(xi), _norm(eta)
    d = eta - xi
    lhs = _dot(eval_H(eta, p - 1) - eval_H(xi, p - 1), d)
    c = min(1.0, p - 1) / 2.0 ** (p + 1)
    rhs = c * power(rx - 1.0, p) / (rx * (rx + re)) * _dot(d, d)
    return GapSample("bogelein_lower", lhs=lhs, rhs=rhs, gap=lhs - rhs,
                     inputs={"xi": xi, "eta": eta, "p": p}, constant=c)


# -- Lindqvist chain -----------------------------------------------------------

def _lindqvist_sides(xi, eta, p):
    dv = eval_V(xi, p) - eval_V(eta, p)
    left = _dot(dv, dv)
    d = xi - eta
    middle = power(1.0 + _dot(xi, xi) + _dot(eta, eta), (p - 2) / 2) * _dot(d, d)
    ax = power(1.0 + _dot(xi, xi), (p - 2) / 2)[..., None] * xi
    ae = power(1.0 + _dot(eta, eta), (p - 2) / 2)[..., None] * eta
    right = _dot(ax - ae, d)
    return left, middle, right


def lindqvist_ratios(xi, eta, p):
    """Ratios ``|V(xi)-V(eta)|^2 / middle`` and ``middle / monotone form``;
    both are zero where ``xi = eta``."""
    _check_p(p)
    xi, eta = _vec(xi, "xi"), _vec(eta, "eta")
    left, middle, right = _lindqvist_sides(xi, eta, p)
    ok = middle > 0
    r1 = np.where(ok, left / np.where(ok, middle, 1.0), 0.0)
    r2 = np.where(ok, middle / np.where(ok, right, 1.0), 0.0)
    return r1, r2


def lindqvist_gap(xi, eta, p, c1):
    """Two links of ``|V(xi)-V(eta)|^2 / c1 <= (1+|xi|^2+|eta|^2)^{(p-2)/2}|xi-eta|^2
    <= c1 <a(xi)-a(eta), xi-eta>`` with ``a(z) = (1+|z|^2)^{(p-2)/2} z``.

    Returns ``(lower_link, upper_link)``.
    """
    _check_p(p)
    if not c1 >= 1:
        raise ParameterError("c1 must be >= 1")
    xi, eta = _vec(xi, "xi"), _vec(eta, "eta")
    left, middle, right = _lindqvist_sides(xi, eta, p)
    inputs = {"xi": xi, "eta": eta, "p": p}
    low = GapSample("lindqvist_lower", lhs=left / c1, rhs=middle,
                    gap=middle - left / c1, inputs=inputs, constant=c1)
    up = GapSample("lindqvist_upper", lhs=middle, rhs=c1 * right,
                   gap=c1 * right - middle, inputs=inputs, constant=c1)
    return low, up


# -- the functions g_k ---------------------------------------------------------

def young_type_gap(A, B, s, k, alpha, sigma):
    """``A B s g_k'((s-k)_+) <= 2 sqrt(2) k [alpha A^2 g_k((s-k)_+)
    + alpha sigma A^2 + c_alpha B^2]`` with ``c_alpha = 1/(4 alpha)``."""
    A, B, s = (np.asarray(v, dtype=float) for v in (A, B, s))
    alpha, sigma = np.asarray(alpha, dtype=float), np.asarray(sigma, dtype=float)
    if np.any(alpha <= 0) or np.any(sigma <= 0):
        raise ParameterError("alpha and sigma must be positive")
    if np.any(A < 0) or np.any(B < 0) or np.any(s < 0):
        raise InvalidInputError("A, B and s must be nonnegative")
    k = np.asarray(k, dtype=float)
    if np.any(k <= 1):
        raise ParameterError("k must be > 1")
    psi = np.maximum(s - k, 0.0)
    # g_k is evaluated elementwise for array k
    g = psi * psi / (k + psi * psi)
    gp = 2.0 * k * psi / (k + psi * psi) ** 2
    c_alpha = 1.0 / (4.0 * alpha)
    lhs = A * B * s * gp
    rhs = 2.0 * math.sqrt(2.0) * k * (alpha * A * A * g + alpha * sigma * A * A
                                      + c_alpha * B * B)
    return GapSample("young_type", lhs=lhs, rhs=rhs, gap=rhs - lhs,
                     inputs={"A": A, "B": B, "s": s, "k": k, "alpha": alpha,
                             "sigma": sigma})


def gk_prime_profile(s, k):
    """``s g_k'((s^2-k)_+)``."""
    s = np.asarray(s, dtype=float)
    return s * eval_g_prime(np.maximum(s * s - k, 0.0), k)


def gk_prime_bound(k, ladder_points=200_001, return_argmax=False):
    """Supremum over ``s >= 0`` of ``s g_k'((s^2-k)_+)``.

    A dense ladder on ``[sqrt(k), sqrt(k) + L]`` brackets the maximizer and a
    bounded scalar maximization polishes it.  The profile vanishes on
    ``[0, sqrt(k)]`` and decays like ``s^{-5}`` at infinity.
    """
    if not k > 1:
        raise ParameterError(f"k must be > 1, got {k}")
    lo = math.sqrt(k)
    hi = lo + 20.0 * (1.0 + k)
    s = np.linspace(lo, hi, ladder_points)
    vals = gk_prime_profile(s, k)
    i = int(np.argmax(vals))
    a, b = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
    res = minimize_scalar(lambda x: -float(gk_prime_profile(x, k)),
                          bounds=(a, b), method="bounded",
                          options={"xatol": 1e-13})
    best_s, best = (res.x, -res.fun) if -res.fun >= vals[i] else (s[i], vals[i])
    if return_argmax:
        return float(best), float(best_s)
    return float(best)


# -- G_delta versus H_{p/2} ---------------------------------------------------

def gh_comparison_gap(xi, eta, params):
    """``|G((|xi|-delta-1)_+) - G((|eta|-delta-1)_+)|^2 <= (2/p)^2 |H_{p/2}(xi)-H_{p/2}(eta)|^2``."""
    xi, eta = _vec(xi, "xi"), _vec(eta, "eta")
    p, delta = params.p, params.delta
    ax = np.maximum(_norm(xi) - delta - 1.0, 0.0)
    ae = np.maximum(_norm(eta) - delta - 1.0, 0.0)
    both = np.concatenate([np.ravel(ax), np.ravel(ae)])
    g = eval_G(both, params)
    gx, ge = g[: ax.size].reshape(ax.shape), g[ax.size:].reshape(ae.shape)
    lhs = (gx - ge) ** 2
    dh = eval_H(xi, p / 2) - eval_H(eta, p / 2)
    c_p = (2.0 / p) ** 2
    rhs = c_p * _dot(dh, dh)
    return GapSample("gh_comparison", lhs=lhs, rhs=rhs, gap=rhs - lhs,
                     inputs={"xi": xi, "eta": eta, "p": p, "delta": delta},
                     constant=c_p)


# -- two-sided bounds for G_delta ---------------------------------------------

def _check_delta(delta):
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")


def _log_K(p, delta):
    # log of (delta/(2 sqrt(1+delta)))^{p/(p-2)} (p(sqrt(1+delta)-delta)/delta + 2)^{2/(p-2)}
    a = math.log(delta) - math.log(2.0 * math.sqrt(1.0 + delta))
    b = math.log(p * (math.sqrt(1.0 + delta) - delta) / delta + 2.0)
    return (p * a + 2.0 * b) / (p - 2.0)


def compute_c_p_delta(p, delta):
    """Constant of the lower bound ``c (t+delta)^{p/2} - shift <= G_delta(t)``.

    For ``p > 2`` it solves ``1/(2 - p c) = K(p, delta)`` in closed form,
    ``c = (2 - 1/K)/p``, with ``K`` evaluated in log space so that exponents
    ``p/(p-2)`` stay harmless for ``p`` close to 2.  For ``p = 2`` it is 1/2.
    The value is always below ``2/p`` and is negative for many (p, delta).
    """
    _check_p(p)
    _check_delta(delta)
    if p == 2:
        return 0.5
    inv_k = math.exp(-_log_K(p, delta))
    return (2.0 - inv_k) / p


def c_p_delta_equation(c, p, delta):
    """Both sides of the equation defining the constant for ``p > 2``:
    ``((2 sqrt(1+delta))^{p/2} (2-pc)^{-(p-2)/2} 2/(p(p-2)),
    2 sqrt(1+delta) delta^{p/2-1}/(p-2) - 2/p delta^{p/2})``."""
    _check_p(p)
    _check_delta(delta)
    if p == 2:
        raise ParameterError("the defining equation needs p > 2")
    r = math.sqrt(1.0 + delta)
    lhs = (2.0 * r) ** (p / 2) * (2.0 - p * c) ** (-(p - 2) / 2) * 2.0 / (p * (p - 2))
    rhs = 2.0 * r * delta ** (p / 2 - 1) / (p - 2) - 2.0 / p * delta ** (p / 2)
    return lhs, rhs


def lower_shift(p, delta):
    """Shift ``t~`` paired with :func:`compute_c_p_delta`.

    ``(sqrt(1+delta)+delta)/2`` when ``p = 2``; for ``p > 2`` the constant
    already absorbs the maximum of the remainder, so the shift is 0.
    """
    _check_p(p)
    _check_delta(delta)
    if p == 2:
        return 0.5 * (math.sqrt(1.0 + delta) + delta)
    return 0.0


def certify_G_bounds(p, delta, t):
    """Check ``c (t+delta)^{p/2} - t~ <= G_delta(t) <= (2/p)(t+delta)^{p/2}``.

    Returns ``(lower, upper)`` gap samples over the points ``t``.
    """
    t = np.asarray(t, dtype=float)
    params = Params(p=p, delta=delta)
    g = eval_G(t, params)
    c = compute_c_p_delta(p, delta)
    shift = lower_shift(p, delta)
    w = power(t + delta, p / 2)
    lower = c * w - shift
    upper = 2.0 / p * w
    inputs = {"t": t, "p": p, "delta": delta}
    return (GapSample("G_lower", lhs=lower, rhs=g, gap=g - lower, inputs=inputs, constant=c),
            GapSample("G_upper", lhs=g, rhs=upper, gap=upper - g, inputs=inputs,
                      constant=2.0 / p))


# -- interpolation inequality --------------------------------------------------

def interpolation_check(v, p, q, region=None):
    """Measured ratio of ``int |v|^{p+pq/n}`` to
    ``(sup_t int |v|^q dx)^{p/n} int |Dv|^p`` on a space-time field.

    ``v`` is a :class:`~degenflow.grid.ScalarField` that should vanish on the
    lateral boundary of ``region`` (the whole grid box when ``region`` is
    None).  A zero field gives ratio 0.  The returned sample has
    ``lhs``/``rhs`` as the two sides and ``gap`` equal to the ratio.
    """
    from . import grid as _grid

    if p < 1 or q < 1:
        raise ParameterError("p and q must be >= 1")
    g = v.grid
    n = g.n
    mask = _grid.region_mask(g, region)
    vals = np.abs(v.values)
    lhs = _grid.integrate(power(vals, p + p * q / n), g, mask)
    slices = _grid.slice_integrals(power(vals, q), g, mask)
    sup_q = float(np.max(slices)) if slices.size else 0.0
    dv = _grid.gradient(v).values
    grad_p = _grid.integrate(power(_norm(dv), p), g, mask)
    rhs = sup_q ** (p / n) * grad_p
    ratio = lhs / rhs if rhs > 0 else 0.0
    return GapSample("interpolation", lhs=np.asarray(lhs), rhs=np.asarray(rhs),
                     gap=np.asarray(ratio), inputs={"p": p, "q": q})


# -- sampling -------------------------------------------------------------------

def calibrate_constant(ratios, margin=1.05, floor=1.0):
    """``margin * max(ratios)``, never below ``floor``."""
    r = np.asarray(ratios, dtype=float)
    r = r[np.isfinite(r)]
    top = float(r.max()) if r.size else 0.0
    return max(floor, margin * top)


def _directions(rng, size, n):
    d = rng.standard_normal((size, n))
    nr = _norm(d)
    bad = nr == 0
    d[bad] = 1.0
    nr[bad] = math.sqrt(n)
    return d / nr[:, None]


def sample_vectors(rng, size, n, delta, r_min=0.0, r_max=10.0):
    """Stratified vectors with ``r_min <= |x| <= r_max`` (``r_min`` exclusive
    when positive).

    Half are uniform on the cube ``[-10, 10]^n`` restricted to the annulus;
    a fifth each hug the degenerate sphere ``|x| in [0.9, 1.1]`` and the
    shifted sphere ``|x| in [1+delta-0.1, 1+delta+0.1]`` (clipped to the
    annulus); the rest have radii uniform on the annulus.
    """
    n_uniform = size // 2
    n_shell = size // 5
    n_rest = size - n_uniform - 2 * n_shell
    out = []
    got = 0
    chunks = []
    while got < n_uniform:
        c = rng.uniform(-10.0, 10.0, (2 * (n_uniform - got) + 16, n))
        r = _norm(c)
        c = c[(r <= r_max) & (r > r_min) if r_min > 0 else (r <= r_max)]
        chunks.append(c)
        got += len(c)
    out.append(np.concatenate(chunks)[:n_uniform])

    def shell(lo, hi, m):
        lo, hi = max(lo, r_min), min(hi, r_max)
        if hi <= lo:
            lo, hi = r_min, r_max
        rad = rng.uniform(lo, hi, m)
        if r_min > 0:
            rad = np.where(rad <= r_min, np.nextafter(r_min, np.inf), rad)
        return _directions(rng, m, n) * rad[:, None]

    out.append(shell(0.9, 1.1, n_shell))
    out.append(shell(1.0 + delta - 0.1, 1.0 + delta + 0.1, n_shell))
    out.append(shell(r_min, r_max, n_rest))
    x = np.concatenate(out)
    return x[rng.permutation(size)]


def sample_pairs(rng, size, n, delta, xi_min=0.0):
    """Pairs ``(xi, eta)`` for the vector inequalities.

    Both members follow :func:`sample_vectors`; in addition a tenth of the
    pairs are near-coincident (``eta = xi + 1e-3 noise``) and a tenth are
    collinear (``eta = lambda xi``), where the inequalities are tightest.
    """
    xi = sample_vectors(rng, size, n, delta, r_min=xi_min)
    eta = sample_vectors(rng, size, n, delta)
    m = size // 10
    eta[:m] = xi[:m] + 1e-3 * rng.standard_normal((m, n))
    lam = rng.uniform(0.0, 2.0, m)
    eta[m:2 * m] = xi[m:2 * m] * lam[:, None]
    return xi, eta


# -- suite driver -----------------------------------------------------------------

LEMMA_IDS = (
    "brasco_monotonicity",
    "brasco_lipschitz",
    "bogelein_upper",
    "bogelein_lower",
    "lindqvist_lower",
    "lindqvist_upper",
    "young_type",
    "gk_prime",
    "gh_comparison",
    "G_lower",
    "G_upper",
)

LEMMA_CSV_COLUMNS = ("lemma_id", "p", "delta", "n", "samples", "min_gap",
                     "calibrated_constant", "seed")


@dataclass
class LemmaRow:
    lemma_id: str
    p: float
    delta: float
    n: int
    samples: int
    min_gap: float
    calibrated_constant: float
    seed: int

    @property
    def passed(self):
        return self.min_gap >= -GAP_RTOL

    def as_tuple(self):
        return (self.lemma_id, repr(float(self.p)), repr(float(self.delta)), self.n,
                self.samples, repr(self.min_gap), repr(float(self.calibrated_constant)),
                self.seed)


def _rng(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def _key(x):
    # stable integer key for a float parameter
    return int(round(float(x) * 1_000_000))


def _young_inputs(rng, m):
    A = rng.uniform(0.0, 10.0, m)
    B = rng.uniform(0.0, 10.0, m)
    k = 1.0 + rng.uniform(0.0, 9.0, m)
    # concentrate s just above k where the profile is largest
    s = np.where(rng.random(m) < 0.5, k + rng.exponential(2.0, m), rng.uniform(0.0, 40.0, m))
    alpha = 10.0 ** rng.uniform(-3.0, 3.0, m)
    sigma = 10.0 ** rng.uniform(-3.0, 3.0, m)
    return A, B, s, k, alpha, sigma


def _shard(lemma_id, p, delta, n, size, rng, constants):
    """Normalized minimum gap of one lemma on one shard of samples."""
    params = Params(p=p, delta=delta, n=n)
    if lemma_id in ("brasco_monotonicity", "brasco_lipschitz", "gh_comparison"):
        xi, eta = sample_pairs(rng, size, n, delta)
        if lemma_id == "brasco_monotonicity":
            return brasco_monotonicity_gap(xi, eta, p).min_gap()
        if lemma_id == "brasco_lipschitz":
            return brasco_lipschitz_gap(xi, eta, p).min_gap()
        return gh_comparison_gap(xi, eta, params).min_gap()
    if lemma_id in ("bogelein_upper", "bogelein_lower"):
        xi, eta = sample_pairs(rng, size, n, delta, xi_min=1.0)
        if lemma_id == "bogelein_upper":
            return bogelein_upper_gap(xi, eta, p, constants["bogelein_upper"]).min_gap()
        return bogelein_lower_gap(xi, eta, p).min_gap()
    if lemma_id in ("lindqvist_lower", "lindqvist_upper"):
        xi, eta = sample_pairs(rng, size, n, delta)
        low, up = lindqvist_gap(xi, eta, p, constants["lindqvist"])
        return (low if lemma_id == "lindqvist_lower" else up).min_gap()
    if lemma_id == "young_type":
        return young_type_gap(*_young_inputs(rng, size)).min_gap()
    if lemma_id == "gk_prime":
        k = 1.0 + 9.0 * rng.random()
        bound = gk_prime_bound(k)
        s = np.concatenate([rng.uniform(0.0, 50.0, size // 2),
                            math.sqrt(k) + rng.exponential(1.0, size - size // 2)])
        prof = gk_prime_profile(s, k)
        return GapSample("gk_prime", lhs=prof, rhs=np.full_like(prof, bound),
                         gap=bound - prof).min_gap()
    if lemma_id in ("G_lower", "G_upper"):
        t = rng.uniform(0.0, 100.0, size)
        low, up = certify_G_bounds(p, delta, t)
        return (low if lemma_id == "G_lower" else up).min_gap()
    raise ParameterError(f"unknown lemma {lemma_id!r}")


def _calibrate(p, n, delta, size, seed):
    rng = _rng(seed, 1, _key(p), n)
    xi, eta = sample_pairs(rng, size, n, delta, xi_min=1.0)
    c_up = calibrate_constant(bogelein_upper_ratio(xi, eta, p))
    xi, eta = sample_pairs(rng, size, n, delta)
    r1, r2 = lindqvist_ratios(xi, eta, p)
    c1 = calibrate_constant(np.concatenate([r1, r2]))
    return {"bogelein_upper": c_up, "lindqvist": c1}


def run_lemma_suite(p_values, delta_values, n_values, samples=100_000, seed=0,
                    shards=8, threads=1, lemmas=LEMMA_IDS, shard_fn=None):
    """Evaluate every lemma on seeded random samples for each parameter triple.

    Samples are split into a fixed number of ``shards`` with independent
    seeds, so results do not depend on ``threads``.  Constants that have no
    explicit value are calibrated on a separate sample stream before the
    test samples are drawn.  ``shard_fn`` replaces the per-shard evaluator
    (used to inject faults in tests).
    """
    shard_fn = shard_fn or _shard
    combos = [(p, d, n) for p in p_values for d in delta_values for n in n_values]
    if not combos:
        raise ParameterError("empty parameter grid")
    sizes = [samples // shards + (1 if i < samples % shards else 0) for i in range(shards)]
    sizes = [s for s in sizes if s > 0]

    constants = {}
    for p, d, n in combos:
        if (p, n) not in constants:
            constants[(p, n)] = _calibrate(p, n, 0.5, samples, seed)

    jobs = []
    for ci, (p, d, n) in enumerate(combos):
        for li, lemma in enumerate(lemmas):
            for si, size in enumerate(sizes):
                rng = _rng(seed, 2, _key(p), _key(d), n, LEMMA_IDS.index(lemma)
                           if lemma in LEMMA_IDS else li, si)
                jobs.append(((p, d, n, lemma), (lemma, p, d, n, size, rng,
                                                constants[(p, n)])))

    def work(job):
        return job[0], shard_fn(*job[1])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    merged = {}
    for key, g in results:
        merged[key] = min(merged.get(key, math.inf), g)
    rows = []
    for p, d, n in combos:
        consts = constants[(p, n)]
        for lemma in lemmas:
            if lemma == "bogelein_upper":
                const = consts["bogelein_upper"]
            elif lemma.startswith("lindqvist"):
                const = consts["lindqvist"]
            elif lemma == "G_lower":
                const = compute_c_p_delta(p, d)
            else:
                const = float("nan")
            rows.append(LemmaRow(lemma, p, d, n, samples, merged[(p, d, n, lemma)],
                                 const, seed))
    return rows


def write_lemma_csv(rows, path, header_lines=()):
    """Write lemma rows as CSV, preceded by ``# key=value`` header lines."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEMMA_CSV_COLUMNS)
        for r in rows:
            w.writerow(r.as_tuple())
