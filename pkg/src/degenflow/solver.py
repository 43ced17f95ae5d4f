"""Backward-Euler solver for the regularized problems
``u_t - div A_eps(Du) = f^eps`` with Dirichlet data on the parabolic boundary.

Space is discretized conservatively: the gradient is reconstructed on cell
faces (two-point difference across the face, transverse components averaged
from the centered differences at the two adjacent nodes), the flux is
evaluated there and its face differences give the divergence.  Each implicit
step is a nonlinear system solved by semismooth Newton with Armijo
backtracking; a lagged-coefficient fixed point (Kacanov iteration) takes over
when Newton stalls.
"""

from dataclasses import dataclass, field
from functools import cached_property
import csv
import logging
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .errors import InvalidInputError, ParameterError, PreconditionError, SolverError
from .flux import Params, eval_A_eps, eval_A_eps_jacobian
from .grid import Grid, ScalarField

__all__ = [
    "NonlinearSettings",
    "ProblemSpec",
    "StepInfo",
    "SolveResult",
    "FluxOperator",
    "mollify",
    "mollifier_weights",
    "step",
    "solve",
    "residual",
    "face_gradient_norms",
    "ManufacturedSolution",
    "tilted_wave",
    "stationary_quadratic",
    "problem_from_solution",
    "constant_problem",
    "plateau_problem",
    "source_problem",
    "write_convergence_log",
]

log = logging.getLogger(__name__)

# fill-reducing ordering for the 2-D/3-D stencil Jacobians (faster than COLAMD here)
_ORDERING = "MMD_AT_PLUS_A"


@dataclass(frozen=True)
class NonlinearSettings:
    """Stopping rules for the implicit step.

    ``abs_tol`` bounds the sup norm of the step residual; ``damping`` is the
    first trial length of the Armijo line search; ``fallback`` enables the
    fixed-point iteration when Newton fails.
    """

    max_iter: int = 50
    abs_tol: float = 1e-9
    damping: float = 1.0
    fallback: bool = True

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ParameterError("max_iter must be a positive integer")
        if not self.abs_tol > 0:
            raise ParameterError("abs_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ParameterError("damping must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One approximating problem.

    ``initial`` holds the first time level (shape ``grid.nx``); ``boundary``
    is a space-time field whose boundary-node values are the lateral
    Dirichlet trace at every level; ``mollifier`` is the radius used to
    smooth ``f`` (0 keeps ``f`` as given).
    """

    params: Params
    grid: Grid
    f: ScalarField
    initial: np.ndarray
    boundary: ScalarField
    newton: NonlinearSettings = field(default_factory=NonlinearSettings)
    mollifier: float = 0.0

    def __post_init__(self):
        grid = self.grid
        if self.params.n != grid.n:
            raise InvalidInputError("params.n does not match the grid dimension")
        if self.f.grid != grid or self.boundary.grid != grid:
            raise InvalidInputError("f and boundary must live on the problem grid")
        initial = np.array(self.initial, dtype=float)
        if initial.shape != grid.nx:
            raise InvalidInputError(f"initial has shape {initial.shape}, expected {grid.nx}")
        if not np.all(np.isfinite(initial)):
            raise InvalidInputError("initial data must be finite")
        initial.setflags(write=False)
        object.__setattr__(self, "initial", initial)
        bmask = grid.boundary_mask()
        a, b = initial[bmask], self.boundary.values[0][bmask]
        scale = max(1.0, np.max(np.abs(a)), np.max(np.abs(b)))
        if np.max(np.abs(a - b)) > 1e-10 * scale:
            raise PreconditionError("initial and boundary data disagree on the parabolic corner")
        if self.mollifier < 0:
            raise ParameterError("mollifier radius must be nonnegative")

    @cached_property
    def f_eps(self):
        return mollify(self.f, self.mollifier)

    @cached_property
    def operator(self):
        return FluxOperator(self.grid)


@dataclass
class StepInfo:
    iters: int
    residual: float
    method: str


@dataclass
class SolveResult:
    """Space-time solution plus per-step Newton statistics (level 0 is the data)."""

    field: ScalarField
    iters: np.ndarray
    residuals: np.ndarray
    methods: list

    @property
    def values(self):
        return self.field.values


# -- discrete operator -------------------------------------------------------------

class FluxOperator:
    """Sparse face-gradient and face-divergence matrices for a grid.

    ``grads[s][r]`` maps nodal values to component ``r`` of the gradient on
    the faces normal to axis ``s``; ``divs[s]`` maps face fluxes to the
    divergence contribution at interior nodes.
    """

    def __init__(self, grid):
        self.grid = grid
        n, nx, hs = grid.n, grid.nx, grid.spacing
        N = math.prod(nx)
        node = np.arange(N).reshape(nx)
        self.size = N
        self.interior = node[tuple(slice(1, -1) for _ in range(n))].ravel()
        self.n_interior = self.interior.size
        int_shape = tuple(k - 2 for k in nx)
        self.grads, self.divs = [], []
        for s in range(n):
            # faces normal to s: lo index 0..nx_s-2 along s, interior elsewhere
            sl = tuple(slice(0, -1) if r == s else slice(1, -1) for r in range(n))
            lo = node[sl].ravel()
            stride = node.strides[s] // node.itemsize
            hi = lo + stride
            nf = lo.size
            rows = np.arange(nf)
            comps = []
            for r in range(n):
                if r == s:
                    data = np.concatenate([np.full(nf, 1.0 / hs[s]), np.full(nf, -1.0 / hs[s])])
                    m = sp.csr_matrix((data, (np.tile(rows, 2), np.concatenate([hi, lo]))),
                                      shape=(nf, N))
                else:
                    sr = node.strides[r] // node.itemsize
                    w = 1.0 / (4.0 * hs[r])
                    cols = np.concatenate([lo + sr, lo - sr, hi + sr, hi - sr])
                    data = np.concatenate([np.full(nf, w), np.full(nf, -w)] * 2)
                    m = sp.csr_matrix((data, (np.tile(rows, 4), cols)), shape=(nf, N))
                comps.append(m)
            self.grads.append(comps)
            face_shape = tuple(k - 1 if r == s else k - 2 for r, k in enumerate(nx))
            face = np.arange(nf).reshape(face_shape)
            plus = face[tuple(slice(1, None) if r == s else slice(None) for r in range(n))]
            minus = face[tuple(slice(0, -1) if r == s else slice(None) for r in range(n))]
            ni = math.prod(int_shape)
            irow = np.arange(ni)
            data = np.concatenate([np.full(ni, 1.0 / hs[s]), np.full(ni, -1.0 / hs[s])])
            d = sp.csr_matrix((data, (np.tile(irow, 2),
                                      np.concatenate([plus.ravel(), minus.ravel()]))),
                              shape=(ni, nf))
            self.divs.append(d)

    def face_gradients(self, u):
        """List over axes of face gradients, each of shape ``(faces, n)``."""
        return [np.stack([g @ u for g in comps], axis=-1) for comps in self.grads]

    def apply(self, u, params):
        """``div A_eps(Du)`` at interior nodes for flat nodal values ``u``."""
        out = np.zeros(self.n_interior)
        for s, xi in enumerate(self.face_gradients(u)):
            out += self.divs[s] @ eval_A_eps(xi, params)[:, s]
        return out

    def jacobian(self, u, params):
        """Derivative of :meth:`apply` with respect to interior values."""
        total = None
        for s, xi in enumerate(self.face_gradients(u)):
            jac = eval_A_eps_jacobian(xi, params)[:, s, :]
            m = sum(sp.diags(jac[:, r]) @ self.grads[s][r] for r in range(self.grid.n))
            term = self.divs[s] @ m
            total = term if total is None else total + term
        return total.tocsc()[:, self.interior]

    def lagged(self, u, params):
        """Matrix of ``w -> div(phi(|Du|) Dw)`` on all nodes, with ``phi`` frozen
        at ``u`` where ``A_eps(xi) = phi(|xi|) xi``."""
        total = None
        for s, xi in enumerate(self.face_gradients(u)):
            r = np.sqrt(np.sum(xi * xi, axis=-1))
            a = eval_A_eps(xi, params)
            phi = np.where(r > 0, np.sqrt(np.sum(a * a, axis=-1)) / np.where(r > 0, r, 1.0),
                           params.eps)
            m = self.divs[s] @ (sp.diags(phi) @ self.grads[s][s])
            total = m if total is None else total + m
        return total.tocsc()


def face_gradient_norms(u_slice, grid, op=None):
    """Euclidean norms of the face gradients of one time level (all axes)."""
    op = op or FluxOperator(grid)
    u = np.asarray(u_slice, dtype=float).ravel()
    return np.concatenate([np.sqrt(np.sum(g * g, axis=-1)) for g in op.face_gradients(u)])


# -- mollification ----------------------------------------------------------------

def mollifier_weights(radius, spacing):
    """Normalized samples of ``(1 - (x/radius)^2)^3`` on the nodes with ``|x| < radius``."""
    m = int(math.floor(radius / spacing * (1 - 1e-12)))
    x = np.arange(-m, m + 1) * spacing
    w = (1.0 - (x / radius) ** 2) ** 3 if radius > 0 else np.ones(1)
    return w / w.sum()


def mollify(f, eps):
    """Space-time convolution with a tensor-product ``(1-r^2)^3`` bump of radius ``eps``.

    ``f`` is extended by even (half-sample) reflection, which keeps the
    discrete integral unchanged and makes the map an ``L^2`` contraction.
    """
    if eps < 0 or not math.isfinite(eps):
        raise ParameterError("mollifier radius must be finite and nonnegative")
    if eps == 0:
        return f
    grid = f.grid
    half = min(b - a for a, b in grid.extent) / 2
    if eps > half:
        raise ParameterError(f"mollifier radius {eps} exceeds the domain half-width {half}")
    vals = np.array(f.values)
    steps = [(0, grid.dt)] + [(s + 1, h) for s, h in enumerate(grid.spacing)]
    for axis, h in steps:
        w = mollifier_weights(eps, h)
        if w.size == 1:
            continue
        if w.size > vals.shape[axis]:
            raise ParameterError("mollifier support exceeds the time window")
        vals = ndimage.convolve1d(vals, w, axis=axis, mode="reflect")
    return ScalarField(grid, vals)


# -- time stepping ----------------------------------------------------------------

def _level_index(grid, t):
    k = (t - grid.t0) / grid.dt
    ki = int(round(k))
    if abs(k - ki) > 1e-9 * max(1.0, abs(k)) or not 1 <= ki < grid.nt:
        raise InvalidInputError(f"t={t} is not a time level after the first")
    return ki


class _StepSystem:
    def __init__(self, spec, k, u_prev):
        self.spec = spec
        self.op = spec.operator
        self.params = spec.params
        self.dt = spec.grid.dt
        self.prev = np.asarray(u_prev, dtype=float).ravel()[self.op.interior]
        self.f = spec.f_eps.values[k].ravel()[self.op.interior]
        self.full = spec.boundary.values[k].ravel().copy()

    def expand(self, x):
        self.full[self.op.interior] = x
        return self.full

    def residual(self, x):
        u = self.expand(x)
        return (x - self.prev) / self.dt - self.op.apply(u, self.params) - self.f

    def floor(self, x):
        # rounding floor of the residual evaluation
        u = self.expand(x)
        flux = max(np.max(np.abs(eval_A_eps(g, self.params)), initial=0.0)
                   for g in self.op.face_gradients(u))
        scale = (np.max(np.abs(u)) / self.dt + flux * sum(2 / h for h in self.spec.grid.spacing)
                 + np.max(np.abs(self.f), initial=0.0))
        return 256 * np.finfo(float).eps * scale


def _newton(system, x, settings):
    n_int = x.size
    eye = sp.identity(n_int, format="csc") / system.dt
    r = system.residual(x)
    norm2 = float(r @ r)
    tol = max(settings.abs_tol, system.floor(x))
    for it in range(settings.max_iter + 1):
        if np.max(np.abs(r), initial=0.0) <= tol:
            return x, it, True
        if it == settings.max_iter:
            break
        jac = eye - system.op.jacobian(system.expand(x), system.params)
        try:
            d = spla.spsolve(jac, -r, permc_spec=_ORDERING)
        except RuntimeError:
            break
        if not np.all(np.isfinite(d)):
            break
        lam = settings.damping
        for _ in range(40):
            x_new = x + lam * d
            r_new = system.residual(x_new)
            n_new = float(r_new @ r_new)
            if n_new <= (1 - 1e-4 * lam) * norm2:
                break
            lam *= 0.5
        else:
            break
        x, r, norm2 = x_new, r_new, n_new
        tol = max(settings.abs_tol, system.floor(x))
    return x, settings.max_iter, False


def _kacanov(system, x, settings, max_iter):
    # Since div A_eps(Du) = M(u) u with M(u) the lagged matrix, the plain
    # fixed point x <- (I/dt - M(x))^{-1}(...) is x - (I/dt - M(x))^{-1} F(x);
    # it overshoots for increasing phi (p > 2), hence the backtracking.
    n_int = x.size
    eye = sp.identity(n_int, format="csc") / system.dt
    interior = system.op.interior
    r = system.residual(x)
    norm2 = float(r @ r)
    for it in range(1, max_iter + 1):
        lag = system.op.lagged(system.expand(x), system.params)
        d = spla.spsolve(eye - lag[:, interior], -r, permc_spec=_ORDERING)
        lam = 1.0
        for _ in range(30):
            x_new = x + lam * d
            r_new = system.residual(x_new)
            n_new = float(r_new @ r_new)
            if n_new < norm2:
                break
            lam *= 0.5
        else:
            return x, it, False
        x, r, norm2 = x_new, r_new, n_new
        if np.max(np.abs(r)) <= max(settings.abs_tol, system.floor(x)):
            return x, it, True
    return x, max_iter, False


def step(u_prev, t, spec, guess=None, return_info=False):
    """Advance one backward-Euler step to time ``t``.

    Returns the new time level (shape ``grid.nx``) with the Dirichlet trace
    imposed; with ``return_info`` also a :class:`StepInfo`.  Raises
    :class:`SolverError` when neither Newton nor the fallback reaches
    ``spec.newton.abs_tol``.
    """
    if not spec.params.eps > 0:
        raise PreconditionError("solving requires eps > 0")
    grid = spec.grid
    k = _level_index(grid, t)
    u_prev = np.asarray(u_prev, dtype=float)
    if u_prev.shape != grid.nx:
        raise InvalidInputError("u_prev has the wrong shape")
    system = _StepSystem(spec, k, u_prev)
    start = u_prev if guess is None else np.asarray(guess, dtype=float)
    x0 = start.ravel()[system.op.interior].copy()
    settings = spec.newton
    x, iters, ok = _newton(system, x0, settings)
    method = "newton"
    if not ok and settings.fallback:
        log.info("newton stalled at t=%g, switching to fixed point", t)
        x_fp, it_fp, ok = _kacanov(system, x if np.all(np.isfinite(x)) else x0,
                                   settings, 20 * settings.max_iter)
        iters += it_fp
        method = "fixed-point"
        if not ok:
            # polish whatever the fixed point reached
            x_fp, it_n, ok = _newton(system, x_fp, settings)
            iters += it_n
        x = x_fp
    res = float(np.max(np.abs(system.residual(x)), initial=0.0))
    if not ok:
        raise SolverError(f"nonlinear solve failed at t={t}", residual=res, step=k)
    u_new = system.expand(x).copy().reshape(grid.nx)
    info = StepInfo(iters, res, method)
    return (u_new, info) if return_info else u_new


def solve(spec):
    """Run :func:`step` over all time levels; returns a :class:`SolveResult`."""
    grid = spec.grid
    levels = [np.array(spec.initial)]
    iters, residuals, methods = [0], [0.0], ["data"]
    for k in range(1, grid.nt):
        t = grid.t0 + k * grid.dt
        try:
            u, info = step(levels[-1], t, spec, return_info=True)
        except SolverError as exc:
            raise SolverError(f"step {k} failed: {exc}", residual=exc.residual, step=k) from exc
        log.debug("step %d t=%g iters=%d residual=%.3e", k, t, info.iters, info.residual)
        levels.append(u)
        iters.append(info.iters)
        residuals.append(info.residual)
        methods.append(info.method)
    return SolveResult(ScalarField(grid, np.stack(levels)), np.array(iters),
                       np.array(residuals), methods)


def residual(u, spec):
    """Pointwise backward-Euler residual
    ``(u^k - u^{k-1})/dt - div A_eps(Du^k) - f^eps`` at interior nodes of the
    levels ``k >= 1`` (zero elsewhere).  Admits ``eps = 0``."""
    grid = spec.grid
    vals = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    if vals.shape != grid.shape:
        raise InvalidInputError("field does not match the problem grid")
    op = spec.operator
    out = np.zeros(grid.shape)
    fe = spec.f_eps.values
    for k in range(1, grid.nt):
        cur = vals[k].ravel()
        r = ((cur[op.interior] - vals[k - 1].ravel()[op.interior]) / grid.dt
             - op.apply(cur, spec.params) - fe[k].ravel()[op.interior])
        flat = out[k].reshape(-1)
        flat[op.interior] = r
    return ScalarField(grid, out)


# -- data ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedSolution:
    """Analytic ``u(x, t)`` with its time derivative, gradient and Hessian.

    Callables take ``x`` of shape ``(n, ...)`` and a scalar ``t``; ``grad``
    returns ``(..., n)`` and ``hess`` returns ``(..., n, n)``.
    """

    u: object
    u_t: object
    grad: object
    hess: object
    name: str = "custom"

    def forcing(self, x, t, params):
        """``u_t - div A_eps(Du) = u_t - tr(DA_eps(Du) D^2 u)``."""
        jac = eval_A_eps_jacobian(self.grad(x, t), params)
        return self.u_t(x, t) - np.einsum("...ij,...ji->...", jac, self.hess(x, t))


def tilted_wave(n=2, amp=0.1, time_factor="linear"):
    """``u = 2 x_1 + x_2 + amp a(t) prod sin(pi x_s)``.

    ``a(t) = 1 + t`` (``"linear"``) or ``1 + sin(2 pi t)/2`` (``"oscillating"``).
    On the unit box ``|Du| >= sqrt(5) - pi amp max a``.
    """
    slope = np.zeros(n)
    slope[0], slope[1] = 2.0, 1.0
    if time_factor == "linear":
        a, da = (lambda t: 1.0 + t), (lambda t: 1.0)
    elif time_factor == "oscillating":
        a = lambda t: 1.0 + 0.5 * math.sin(2 * math.pi * t)
        da = lambda t: math.pi * math.cos(2 * math.pi * t)
    else:
        raise ParameterError(f"unknown time_factor {time_factor!r}")
    pi = math.pi

    def prod_sin(x, skip=()):
        out = np.ones(x.shape[1:])
        for s in range(n):
            if s not in skip:
                out = out * np.sin(pi * x[s])
        return out

    def u(x, t):
        return np.tensordot(slope, x, axes=1) + amp * a(t) * prod_sin(x)

    def u_t(x, t):
        return amp * da(t) * prod_sin(x)

    def grad(x, t):
        comps = [slope[s] + amp * a(t) * pi * np.cos(pi * x[s]) * prod_sin(x, (s,))
                 for s in range(n)]
        return np.stack(comps, axis=-1)

    def hess(x, t):
        out = np.empty(x.shape[1:] + (n, n))
        c = amp * a(t) * pi * pi
        for i in range(n):
            for j in range(n):
                if i == j:
                    out[..., i, i] = -c * prod_sin(x)
                else:
                    out[..., i, j] = (c * np.cos(pi * x[i]) * np.cos(pi * x[j])
                                      * prod_sin(x, (i, j)))
        return out

    return ManufacturedSolution(u, u_t, grad, hess, f"tilted_wave[{time_factor}]")


def stationary_quadratic(n=2, slope=2.0):
    """Time-independent ``u = slope x_1 + |x|^2 / 2`` (``Du = x + slope e_1``)."""
    e1 = np.zeros(n)
    e1[0] = slope

    def u(x, t):
        return slope * x[0] + 0.5 * np.sum(x * x, axis=0)

    def u_t(x, t):
        return np.zeros(x.shape[1:])

    def grad(x, t):
        return np.moveaxis(x, 0, -1) + e1

    def hess(x, t):
        return np.broadcast_to(np.eye(n), x.shape[1:] + (n, n))

    return ManufacturedSolution(u, u_t, grad, hess, "stationary_quadratic")


def _exact_field(grid, func):
    x = grid.coords()
    return np.stack([np.broadcast_to(func(x, t), grid.nx) for t in grid.times])


def problem_from_solution(params, grid, sol, newton=None):
    """Problem whose exact solution is ``sol``: forcing from ``sol.forcing``,
    initial and boundary data from ``sol.u``."""
    exact = _exact_field(grid, sol.u)
    f = _exact_field(grid, lambda x, t: sol.forcing(x, t, params))
    return ProblemSpec(params, grid, ScalarField(grid, f), exact[0],
                       ScalarField(grid, exact), newton or NonlinearSettings())


def constant_problem(params, grid, value=0.0, newton=None):
    c = ScalarField.constant(grid, value)
    return ProblemSpec(params, grid, ScalarField.constant(grid, 0.0), c.values[0], c,
                       newton or NonlinearSettings())


def _unit_coords(grid):
    x = grid.coords()
    return np.stack([(x[s] - a) / (b - a) for s, (a, b) in enumerate(grid.extent)])


def plateau_problem(params, grid, amplitude=0.9, newton=None):
    """``f = 0`` and data ``u0 = amplitude L/pi prod sin(pi xhat_s)`` (``L`` the
    shortest side), whose gradient has norm at most ``amplitude``."""
    L = min(b - a for a, b in grid.extent)
    xh = _unit_coords(grid)
    u0 = amplitude * L / math.pi * np.prod(np.sin(math.pi * xh), axis=0)
    bd = ScalarField(grid, np.broadcast_to(u0, grid.shape))
    return ProblemSpec(params, grid, ScalarField.constant(grid, 0.0), u0, bd,
                       newton or NonlinearSettings())


def source_problem(params, grid, amplitude=4.0, slope=1.5, mollifier=0.0, newton=None):
    """Linear data ``slope (x_1 - a_1)`` with the smooth time-constant source
    ``amplitude prod sin(pi xhat_s)``."""
    xh = _unit_coords(grid)
    x = grid.coords()
    u0 = slope * (x[0] - grid.extent[0][0])
    f = amplitude * np.prod(np.sin(math.pi * xh), axis=0)
    return ProblemSpec(params, grid, ScalarField(grid, np.broadcast_to(f, grid.shape)), u0,
                       ScalarField(grid, np.broadcast_to(u0, grid.shape)),
                       newton or NonlinearSettings(), mollifier)


def write_convergence_log(path, result, grid, header_lines=()):
    """CSV with columns ``step, t, iters, residual, method``."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t", "iters", "residual", "method"])
        for k in range(1, grid.nt):
            w.writerow([k, repr(float(grid.t0 + k * grid.dt)), int(result.iters[k]),
                        repr(float(result.residuals[k])), result.methods[k]])
