"""Vectorized adaptive Simpson quadrature.

All integrals of a batch are refined simultaneously: every pass evaluates the
integrand on the midpoints of all still-active subintervals with one numpy call.
"""

import numpy as np

__all__ = ["adaptive_simpson"]

_ROUNDING = 64 * np.finfo(float).eps


def adaptive_simpson(func, a, b, abs_tol=1e-10, max_intervals=10_000):
    """Integrate ``func`` over each interval ``[a[i], b[i]]``.

    Parameters
    ----------
    func : callable
        Vectorized integrand, called with 1-D float arrays.
    a, b : array_like
        Lower and upper limits, broadcast against each other.
    abs_tol : float or array_like
        Absolute error target per integral (broadcast like ``a``).
    max_intervals : int
        Cap on the number of subintervals any single integral may use.
        Intervals still active when their integral hits the cap are accepted
        with their Richardson-corrected estimate.

    Returns
    -------
    values : ndarray
        Integral estimates, same shape as the broadcast limits.
    """
    a, b, tol = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float),
        np.asarray(abs_tol, dtype=float))
    shape = a.shape
    a = a.ravel().copy()
    b = b.ravel().copy()
    tol = tol.ravel().copy()
    m_total = a.size
    result = np.zeros(m_total)
    if m_total == 0:
        return result.reshape(shape)

    owner = np.arange(m_total)
    pieces = np.ones(m_total, dtype=np.int64)
    mid = 0.5 * (a + b)
    fa, fm, fb = func(a), func(mid), func(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    while owner.size:
        lm = 0.5 * (a + mid)
        rm = 0.5 * (mid + b)
        flm = func(lm)
        frm = func(rm)
        left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb)
        diff = left + right - whole
        # the rounding floor keeps refinement from chasing cancellation noise
        floor = _ROUNDING * (np.abs(left) + np.abs(right))
        done = (np.abs(diff) <= np.maximum(15.0 * tol, floor)) \
            | (pieces[owner] >= max_intervals) \
            | (mid - a <= _ROUNDING * np.maximum(np.abs(a), np.abs(b)))
        if done.any():
            np.add.at(result, owner[done],
                      left[done] + right[done] + diff[done] / 15.0)
        keep = ~done
        if not keep.any():
            break
        np.add.at(pieces, owner[keep], 1)
        # children: [a, mid] and [mid, b]
        a_k, mid_k, b_k = a[keep], mid[keep], b[keep]
        owner = np.concatenate([owner[keep], owner[keep]])
        tol = np.concatenate([tol[keep], tol[keep]]) * 0.5
        a = np.concatenate([a_k, mid_k])
        b = np.concatenate([mid_k, b_k])
        fa = np.concatenate([fa[keep], fm[keep]])
        fb = np.concatenate([fm[keep], fb[keep]])
        fm = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        mid = np.concatenate([lm[keep], rm[keep]])
    return result.reshape(shape)

