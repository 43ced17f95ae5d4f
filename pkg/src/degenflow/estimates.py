"""Both sides of the a-priori estimates, measured on discrete solutions.

Every report localizes to backward cylinders, evaluates the left-hand side
and the bracketed right-hand-side integrals of one estimate, and records
``ratio = lhs / rhs``.  The constants ``c(n, p)`` are unknown, so the ratio
itself is the observable: it should be finite and stable under refinement.

Spatial gradients use :func:`degenflow.grid.gradient`; the gate field is
``G_delta((|Du| - delta - 1)_+)``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .errors import DomainError, InvalidInputError, PreconditionError
from .flux import Params, eval_G, eval_H
from .grid import Cylinder, ScalarField, ball_mask, region_mask, shift_steps, _shifted_diff

__all__ = [
    "EstimateReport",
    "gate_values",
    "caccioppoli_report",
    "uniform_estimate_report",
    "diffquot_estimate_report",
    "diffquot_ladder",
    "comparison_report",
    "eps_ladder",
    "is_halving",
    "higher_integrability_report",
    "write_reports_csv",
    "REPORT_COLUMNS",
]


@dataclass
class EstimateReport:
    """Measured sides of one estimate on one field.

    ``rhs = prefactor * sum(rhs_terms.values())`` except where the estimate
    raises the bracket to a power (recorded in ``extras['bracket_power']``).
    """

    estimate_id: str
    cylinder_inner: Cylinder
    cylinder_outer: Cylinder
    lhs: float
    rhs_terms: dict
    prefactor: float
    rhs: float
    ratio: float
    params: Params
    grid_fingerprint: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.ratio) and self.ratio >= 0 and self.lhs >= 0):
            raise InvalidInputError(f"{self.estimate_id}: lhs and ratio must be finite and >= 0")

    def csv_row(self):
        row = [self.estimate_id, self.cylinder_inner.radius, self.cylinder_outer.radius,
               self.params.delta, self.params.eps, self.params.p, self.params.n,
               self.lhs, self.prefactor, self.rhs, self.ratio]
        terms = list(self.rhs_terms.items())[:3]
        terms += [("", "")] * (3 - len(terms))
        for name, value in terms:
            row += [name, value]
        row.append(self.grid_fingerprint)
        return [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row]

    def summary(self):
        lines = [f"{self.estimate_id}: p={self.params.p} delta={self.params.delta} "
                 f"eps={self.params.eps} n={self.params.n} "
                 f"rho={self.cylinder_inner.radius:g} R={self.cylinder_outer.radius:g}",
                 f"  lhs   = {self.lhs:.6e}",
                 f"  rhs   = {self.prefactor:.6e} * [{' + '.join(self.rhs_terms)}] = {self.rhs:.6e}"]
        for name, value in self.rhs_terms.items():
            lines.append(f"    {name} = {value:.6e}")
        lines.append(f"  ratio = {self.ratio:.6e}")
        return "\n".join(lines)


REPORT_COLUMNS = ["estimate_id", "rho", "R", "delta", "eps", "p", "n", "lhs", "prefactor",
                  "rhs", "ratio", "term1", "value1", "term2", "value2", "term3", "value3",
                  "grid"]


def write_reports_csv(reports, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.csv_row())


# -- level-wise field access -----------------------------------------------------------

def _field(u):
    # accepts ScalarField or anything with a .field attribute (SolveResult)
    return getattr(u, "field", u)


class _Levels:
    """Lazy per-level derived quantities of a space-time field."""

    def __init__(self, u, params):
        self.u = _field(u)
        self.grid = self.u.grid
        self.params = params
        self._grad, self._gate, self._dgate = {}, {}, {}
        if params.n != self.grid.n:
            raise InvalidInputError("params.n does not match the grid dimension")

    def grad(self, k):
        if k not in self._grad:
            g = self.grid
            comps = [np.gradient(self.u.values[k], g.spacing[s], axis=s, edge_order=2)
                     for s in range(g.n)]
            self._grad[k] = np.stack(comps, axis=-1)
        return self._grad[k]

    def norm(self, k):
        d = self.grad(k)
        return np.sqrt(np.sum(d * d, axis=-1))

    def gate(self, k):
        if k not in self._gate:
            p = self.params
            arg = np.maximum(self.norm(k) - p.delta - 1.0, 0.0)
            self._gate[k] = eval_G(arg, p)
        return self._gate[k]

    def dgate_sq(self, k):
        if k not in self._dgate:
            g = self.grid
            G = self.gate(k)
            self._dgate[k] = sum(np.gradient(G, g.spacing[s], axis=s, edge_order=2) ** 2
                                 for s in range(g.n))
        return self._dgate[k]


def gate_values(u, params):
    """Space-time values of ``G_delta((|Du| - delta - 1)_+)``."""
    lv = _Levels(u, params)
    return ScalarField(lv.grid, np.stack([lv.gate(k) for k in range(lv.grid.nt)]))


def _mask_levels(mask):
    axes = tuple(range(1, mask.ndim))
    return np.flatnonzero(mask.any(axis=axes))


def _integral(grid, mask, func):
    """``sum_k int func(k) over mask[k]`` with the node weight."""
    total = 0.0
    for k in _mask_levels(mask):
        total += float(np.sum(func(k)[mask[k]]))
    return grid.weight * total


def _sup_slice(grid, mask, func):
    vals = [float(np.sum(func(k)[mask[k]])) * grid.cell_volume for k in _mask_levels(mask)]
    return max(vals)


def _z0(grid, z0):
    if z0 is None:
        return tuple(0.5 * (a + b) for a, b in grid.extent), grid.t_end
    x0, t0 = z0
    return tuple(x0), float(t0)


def _nested(inner, outer, grid):
    m_in, m_out = region_mask(grid, inner), region_mask(grid, outer)
    if not outer.contains(inner):
        raise DomainError("inner cylinder is not inside the outer one")
    return m_in, m_out


def _sq(field_or_none, grid):
    if field_or_none is None:
        return lambda k: np.zeros(grid.nx)
    vals = _field(field_or_none).values
    return lambda k: vals[k] ** 2


def _finish(estimate_id, inner, outer, lhs, terms, prefactor, params, grid, extras=None,
            power=1.0):
    bracket = sum(terms.values())
    rhs = prefactor * bracket**power
    ratio = lhs / rhs if rhs > 0 else 0.0
    extras = dict(extras or {})
    if power != 1.0:
        extras["bracket_power"] = power
    return EstimateReport(estimate_id, inner, outer, float(lhs), terms, float(prefactor),
                          float(rhs), float(ratio), params, grid.fingerprint(), extras)


# -- reports -----------------------------------------------------------------------

def caccioppoli_report(u, params, R, z0=None, f=None):
    """Higher-differentiability estimate on ``Q_{R/16} \\subset Q_R``.

    lhs ``= int_{Q_{R/16}} |D G_delta((|Du|-delta-1)_+)|^2``; rhs
    ``= (R delta)^{-2} [int_{Q_R} (|Du|^p + 1) + delta^{-p} int_{Q_R} |f|^2]``.
    """
    lv = _Levels(u, params)
    grid = lv.grid
    x0, t0 = _z0(grid, z0)
    outer = Cylinder(x0, t0, R)
    inner = outer.scaled(1 / 16)
    m_in, m_out = _nested(inner, outer, grid)
    p, d = params.p, params.delta
    lhs = _integral(grid, m_in, lv.dgate_sq)
    terms = {
        "int(|Du|^p+1)": _integral(grid, m_out, lambda k: lv.norm(k) ** p + 1.0),
        "delta^-p*int|f|^2": d**-p * _integral(grid, m_out, _sq(f, grid)),
    }
    return _finish("caccioppoli", inner, outer, lhs, terms, 1.0 / (R * R * d * d), params, grid)


def uniform_estimate_report(u_eps, spec, rho, z0=None):
    """Uniform estimate on ``Q_rho \\subset Q_{2 rho}``.

    lhs ``= sup_tau int_{B_rho} (|Du|^2 - 1 - delta)_+ + int_{Q_rho} |D G|^2``
    with ``tau`` over the levels in ``(t0 - 4 rho^2, t0]``; rhs
    ``= rho^{-2} [int_{Q_{2rho}} (1 + |Du|^p) + delta^{2-p} int_{Q_{2rho}} |f^eps|^2]``.
    """
    params = spec.params
    lv = _Levels(u_eps, params)
    grid = lv.grid
    x0, t0 = _z0(grid, z0)
    inner = Cylinder(x0, t0, rho)
    outer = Cylinder(x0, t0, 2 * rho)
    m_in, m_out = _nested(inner, outer, grid)
    p, d = params.p, params.delta
    window = m_out & ball_mask(grid, x0, rho)
    sup_term = _sup_slice(grid, window, lambda k: np.maximum(lv.norm(k) ** 2 - 1.0 - d, 0.0))
    grad_term = _integral(grid, m_in, lv.dgate_sq)
    terms = {
        "int(1+|Du|^p)": _integral(grid, m_out, lambda k: 1.0 + lv.norm(k) ** p),
        "delta^(2-p)*int|f_eps|^2": d ** (2 - p) * _integral(grid, m_out, _sq(spec.f_eps, grid)),
    }
    extras = {"sup_term": sup_term, "gradient_term": grad_term}
    return _finish("uniform", inner, outer, sup_term + grad_term, terms, 1.0 / rho**2,
                   params, grid, extras)


def diffquot_estimate_report(u_eps, spec, rho, h, z0=None, axis=0):
    """Difference-quotient estimate on ``Q_{rho/2} \\subset Q_{2 rho}``.

    lhs ``= int_{Q_{rho/2}} |tau_h G|^2`` along ``axis``; rhs
    ``= |h|^2 (rho delta)^{-2} [int_{Q_{2rho}} (1 + |Du|^p) + delta^{-p} int |f^eps|^2]``.
    Requires ``|h| < rho/4`` with ``h`` a multiple of the spacing.
    """
    params = spec.params
    lv = _Levels(u_eps, params)
    grid = lv.grid
    if not abs(h) < rho / 4:
        raise PreconditionError("need |h| < rho/4")
    k_shift = shift_steps(grid, axis, h)
    x0, t0 = _z0(grid, z0)
    inner = Cylinder(x0, t0, rho / 2)
    outer = Cylinder(x0, t0, 2 * rho)
    m_in, m_out = _nested(inner, outer, grid)
    p, d = params.p, params.delta
    lhs = _integral(grid, m_in, lambda k: _shifted_diff(lv.gate(k), axis, k_shift) ** 2)
    terms = {
        "int(1+|Du|^p)": _integral(grid, m_out, lambda k: 1.0 + lv.norm(k) ** p),
        "delta^-p*int|f_eps|^2": d**-p * _integral(grid, m_out, _sq(spec.f_eps, grid)),
    }
    return _finish("diffquot", inner, outer, lhs, terms, h * h / (rho * rho * d * d),
                   params, grid, {"h": h, "axis": axis})


def diffquot_ladder(u_eps, spec, rho, hs, z0=None, axis=0):
    """Reports along a ladder of shifts and whether ``lhs(h)/h^2`` stays
    within a factor 2 between consecutive rungs."""
    reports = [diffquot_estimate_report(u_eps, spec, rho, h, z0, axis) for h in hs]
    scaled = [r.lhs / r.extras["h"] ** 2 for r in reports]
    ok = all(b > 0 and 0.5 <= a / b <= 2.0 for a, b in zip(scaled, scaled[1:]))
    return reports, ok


def comparison_report(u_eps1, u_eps2, f, f_eps1, f_eps2, params, R, z0=None):
    """Comparison estimate with the finer solve ``u_eps2`` standing in for the limit.

    lhs ``= sup_t ||u1 - u2||^2_{L^2(B_R)} + int_{Q_R} |H_{p/2}(Du1) - H_{p/2}(Du2)|^2``.
    rhs terms use ``d = ||f_eps1 - f_eps2||_{L^2(Q_R)}``:
    ``d^{(n+2)/(n+1)} (int(|Du2|^p+1))^{n/(p(n+1))}``,
    ``d^{p(n+2)/(n(p-1)+p)}`` and ``eps1 int |Du2|^p``.
    ``params.eps`` is ``eps1``.
    """
    l1, l2 = _Levels(u_eps1, params), _Levels(u_eps2, params)
    grid = l1.grid
    if l2.grid != grid:
        raise InvalidInputError("the two solutions live on different grids")
    x0, t0 = _z0(grid, z0)
    cyl = Cylinder(x0, t0, R)
    mask = region_mask(grid, cyl)
    p, n = params.p, params.n
    v1, v2 = l1.u.values, l2.u.values
    sup_term = _sup_slice(grid, mask, lambda k: (v1[k] - v2[k]) ** 2)

    def hdiff(k):
        diff = eval_H(l1.grad(k), p / 2) - eval_H(l2.grad(k), p / 2)
        return np.sum(diff * diff, axis=-1)

    h_term = _integral(grid, mask, hdiff)
    fe1, fe2 = _field(f_eps1).values, _field(f_eps2).values
    dist = math.sqrt(_integral(grid, mask, lambda k: (fe1[k] - fe2[k]) ** 2))
    grad_p = _integral(grid, mask, lambda k: l2.norm(k) ** p)
    measure = _integral(grid, mask, lambda k: np.ones(grid.nx))
    terms = {
        "df^((n+2)/(n+1))*int(|Du|^p+1)^(n/(p(n+1)))":
            dist ** ((n + 2) / (n + 1)) * (grad_p + measure) ** (n / (p * (n + 1))),
        "df^(p(n+2)/(n(p-1)+p))": dist ** (p * (n + 2) / (n * (p - 1) + p)),
        "eps*int|Du|^p": params.eps * grad_p,
    }
    extras = {"sup_l2_sq": sup_term, "h_l2_sq": h_term, "h_distance": math.sqrt(h_term),
              "f_distance": dist}
    if f is not None:
        extras["f_minus_f_eps1"] = math.sqrt(
            _integral(grid, mask, lambda k: (_field(f).values[k] - fe1[k]) ** 2))
    return _finish("comparison", cyl, cyl, sup_term + h_term, terms, 1.0, params, grid, extras)


def is_halving(eps_values, rtol=1e-12):
    e = list(eps_values)
    return len(e) > 1 and all(abs(b - a / 2) <= rtol * a for a, b in zip(e, e[1:]))


def eps_ladder(make_spec, eps_values, R, z0=None, slack=0.10, solver=None, threads=1):
    """Solve along an ``eps`` ladder and compare successive rungs.

    ``make_spec(eps)`` returns a ProblemSpec.  Returns ``(reports, distances,
    monotone)`` where ``distances`` are the ``L^2`` norms of successive
    ``H_{p/2}`` differences and ``monotone`` is None unless the ladder halves,
    in which case it tells whether each distance is at most ``(1 + slack)``
    times the previous one.  Rungs are independent and run on up to
    ``threads`` workers.
    """
    from .solver import solve as _solve

    solver = solver or _solve
    specs = [make_spec(e) for e in eps_values]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sols = [r.field for r in pool.map(solver, specs)]
    else:
        sols = [solver(s).field for s in specs]
    reports = []
    for i in range(len(specs) - 1):
        s1, s2 = specs[i], specs[i + 1]
        reports.append(comparison_report(sols[i], sols[i + 1], s1.f, s1.f_eps, s2.f_eps,
                                         s1.params, R, z0))
    distances = [r.extras["h_distance"] for r in reports]
    monotone = None
    if is_halving(eps_values) and len(distances) > 1:
        monotone = all(b <= (1 + slack) * a for a, b in zip(distances, distances[1:]))
    return reports, distances, monotone


def higher_integrability_report(u_eps, spec, rho, z0=None):
    """Higher-integrability estimate on ``Q_{rho/2} \\subset Q_{2 rho}``, ``q = p + 4/n``.

    lhs ``= int_{Q_{rho/2}} (|Du|-1)_+^q + |Q_{rho/2}|`` (degenerate part plus
    the measure that bounds the rest); rhs
    ``= rho^{-2(n+2)/n} [int_{Q_{2rho}} (1 + |Du|^p + |f^eps|^2)]^{2/n+1}``.
    ``extras`` keeps the degenerate part and ``int |Du|^q`` separately.
    """
    params = spec.params
    lv = _Levels(u_eps, params)
    grid = lv.grid
    n, p = params.n, params.p
    q = p + 4.0 / n
    x0, t0 = _z0(grid, z0)
    inner = Cylinder(x0, t0, rho / 2)
    outer = Cylinder(x0, t0, 2 * rho)
    m_in, m_out = _nested(inner, outer, grid)
    degenerate = _integral(grid, m_in, lambda k: np.maximum(lv.norm(k) - 1.0, 0.0) ** q)
    full = _integral(grid, m_in, lambda k: lv.norm(k) ** q)
    measure = _integral(grid, m_in, lambda k: np.ones(grid.nx))
    fe2 = _sq(spec.f_eps, grid)
    terms = {"int(1+|Du|^p+|f_eps|^2)":
             _integral(grid, m_out, lambda k: 1.0 + lv.norm(k) ** p + fe2(k))}
    extras = {"degenerate_part": degenerate, "full_power": full, "measure": measure, "q": q}
    return _finish("higher_integrability", inner, outer, degenerate + measure, terms,
                   rho ** (-2.0 * (n + 2) / n), params, grid, extras, power=2.0 / n + 1.0)
