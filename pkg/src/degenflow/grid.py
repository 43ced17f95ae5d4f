"""Uniform space-time grids, difference quotients, cylinders and norms.

Fields store values with shape ``(nt, nx_1, ..., nx_n)`` (scalars) or
``(nt, nx_1, ..., nx_n, n)`` (vectors); spatial axis ``s`` is array axis
``s + 1``.  Balls and backward cylinders are boolean masks over the nodes.
"""

from dataclasses import dataclass
import csv
import hashlib
import json
import math
import struct

import numpy as np

from .errors import DomainError, InvalidInputError, PreconditionError

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "Cylinder",
    "tau_h",
    "delta_h",
    "inner_mask",
    "shift_steps",
    "parts_identity_check",
    "product_rule_check",
    "commutation_check",
    "gradient",
    "divergence",
    "ball_mask",
    "region_mask",
    "integrate",
    "slice_integrals",
    "lq_norm",
    "sup_slice_norm",
    "diffquot_gradient_bound_check",
    "write_snapshot",
    "read_snapshot",
    "write_field_csv",
    "SNAPSHOT_MAGIC",
]

_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Box ``prod [a_i, b_i]`` with ``nx_i`` nodes per axis and ``nt`` time
    levels ``t0, t0 + dt, ...``."""

    n: int
    extent: tuple
    nx: tuple
    dt: float
    nt: int
    t0: float = 0.0

    def __post_init__(self):
        extent = tuple((float(a), float(b)) for a, b in self.extent)
        nx = tuple(int(k) for k in self.nx)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "nx", nx)
        if len(extent) != self.n or len(nx) != self.n:
            raise InvalidInputError("extent and nx must have one entry per axis")
        if any(k < 3 for k in nx):
            raise InvalidInputError("need at least 3 nodes per axis")
        if any(not b > a for a, b in extent):
            raise InvalidInputError("each axis needs b > a")
        if not self.dt > 0 or self.nt < 1:
            raise InvalidInputError("need dt > 0 and nt >= 1")

    @classmethod
    def cube(cls, n, lo, hi, points, dt, nt, t0=0.0):
        return cls(n, ((lo, hi),) * n, (points,) * n, dt, nt, t0)

    @property
    def spacing(self):
        return tuple((b - a) / (k - 1) for (a, b), k in zip(self.extent, self.nx))

    @property
    def shape(self):
        return (self.nt,) + self.nx

    @property
    def cell_volume(self):
        return math.prod(self.spacing)

    @property
    def weight(self):
        """Quadrature weight of one space-time node."""
        return self.cell_volume * self.dt

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    @property
    def t_end(self):
        return self.t0 + self.dt * (self.nt - 1)

    def axis(self, s):
        a, b = self.extent[s]
        return np.linspace(a, b, self.nx[s])

    def coords(self):
        """Spatial node coordinates, shape ``(n, nx_1, ..., nx_n)``."""
        return np.stack(np.meshgrid(*[self.axis(s) for s in range(self.n)], indexing="ij"))

    def boundary_mask(self):
        """Spatial mask of nodes on the box boundary."""
        m = np.zeros(self.nx, dtype=bool)
        for s in range(self.n):
            sl = [slice(None)] * self.n
            sl[s] = 0
            m[tuple(sl)] = True
            sl[s] = -1
            m[tuple(sl)] = True
        return m

    def with_resolution(self, nx=None, dt=None, nt=None):
        return Grid(self.n, self.extent, self.nx if nx is None else nx,
                    self.dt if dt is None else dt, self.nt if nt is None else nt, self.t0)

    def fingerprint(self):
        blob = json.dumps([self.n, self.extent, self.nx, self.dt, self.nt, self.t0])
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


class _Field:
    _vector = False

    def __init__(self, grid, values):
        values = np.array(values, dtype=float)
        expected = grid.shape + ((grid.n,) if self._vector else ())
        if values.shape != expected:
            raise InvalidInputError(f"values have shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("field values must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def __repr__(self):
        return f"{type(self).__name__}(grid={self.grid.fingerprint()}, shape={self.values.shape})"

    def _new(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other):
        return self._new(self.values + _vals(other))

    def __sub__(self, other):
        return self._new(self.values - _vals(other))

    def __mul__(self, other):
        return self._new(self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self._new(-self.values)

    def magnitude(self):
        return np.sqrt(np.sum(self.values**2, axis=-1)) if self._vector else np.abs(self.values)


def _vals(x):
    return x.values if isinstance(x, _Field) else x


class ScalarField(_Field):
    """Scalar values on every space-time node of a grid."""

    @classmethod
    def from_function(cls, grid, func):
        """``func(x, t)`` with ``x`` of shape ``(n, ...)`` broadcast against ``t``."""
        x = grid.coords()
        vals = np.stack([np.broadcast_to(func(x, t), grid.nx) for t in grid.times])
        return cls(grid, vals)

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))


class VectorField(_Field):
    """``n``-vector on every space-time node (component axis last)."""

    _vector = True


# -- difference quotients -------------------------------------------------------

def shift_steps(grid, s, h):
    """Number of grid steps represented by the shift ``h`` along axis ``s``."""
    if not 0 <= s < grid.n:
        raise DomainError(f"axis {s} out of range")
    m = h / grid.spacing[s]
    k = int(round(m))
    if k == 0 or abs(m - k) > _TOL * max(1.0, abs(m)):
        raise DomainError(f"h={h} is not a nonzero multiple of the spacing {grid.spacing[s]}")
    if 2 * abs(k) >= grid.nx[s] - 1:
        raise DomainError(f"|h|={abs(h)} leaves no inner domain on axis {s}")
    return k


def _shifted_diff(arr, axis, k):
    # out[x] = arr[x + k] - arr[x] where defined, 0 elsewhere
    out = np.zeros_like(arr)
    n = arr.shape[axis]
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if k > 0:
        dst[axis] = slice(0, n - k)
        src[axis] = slice(k, n)
    else:
        dst[axis] = slice(-k, n)
        src[axis] = slice(0, n + k)
    out[tuple(dst)] = arr[tuple(src)] - arr[tuple(dst)]
    return out


def tau_h(F, s, h):
    """``F(x + h e_s) - F(x)``.

    ``h`` must be a nonzero integer multiple of the spacing on axis ``s``.
    Nodes whose partner ``x + h e_s`` leaves the grid get 0; the values are
    meaningful on :func:`inner_mask` ``(grid, h)``.
    """
    k = shift_steps(F.grid, s, h)
    return F._new(_shifted_diff(F.values, s + 1, k))


def delta_h(F, s, h):
    """Difference quotient ``tau_h F / h``."""
    return F._new(tau_h(F, s, h).values / h)


def inner_mask(grid, h):
    """Spatial mask of ``Omega_{|h|}``: nodes at distance ``> |h|`` from the box boundary."""
    x = grid.coords()
    dist = np.full(grid.nx, np.inf)
    for s, (a, b) in enumerate(grid.extent):
        dist = np.minimum(dist, np.minimum(x[s] - a, b - x[s]))
    return dist > abs(h) + _TOL * max(grid.spacing)


def _spacetime(grid, spatial_mask):
    return np.broadcast_to(spatial_mask, grid.shape)


def parts_identity_check(F, G, s, h):
    """``|sum F Delta_h G + sum G Delta_{-h} F|`` (node-weighted).

    The identity is exact for sums when ``G`` vanishes outside ``Omega_{|h|}``.
    """
    if np.any(G.values[:, ~inner_mask(G.grid, h)] != 0):
        raise PreconditionError("G must vanish outside Omega_|h|")
    w = F.grid.weight
    lhs = w * np.sum(F.values * delta_h(G, s, h).values)
    rhs = -w * np.sum(G.values * delta_h(F, s, -h).values)
    return abs(lhs - rhs)


def product_rule_check(F, G, s, h):
    """Max over ``Omega_{|h|}`` of ``|Delta_h(FG) - F(x+h e_s) Delta_h G - G Delta_h F|``."""
    grid = F.grid
    FG = F._new(F.values * G.values)
    lhs = delta_h(FG, s, h).values
    F_shift = F.values + tau_h(F, s, h).values
    rhs = F_shift * delta_h(G, s, h).values + G.values * delta_h(F, s, h).values
    mask = _spacetime(grid, inner_mask(grid, h))
    return float(np.max(np.abs(lhs - rhs)[mask], initial=0.0))


def commutation_check(F, s, h):
    """Max of ``|D_i Delta_h F - Delta_h D_i F|`` over ``i`` on nodes where all
    stencils are the centered interior ones."""
    grid = F.grid
    d1 = gradient(delta_h(F, s, h)).values
    d2 = delta_h(gradient(F), s, h).values
    mask = _spacetime(grid, inner_mask(grid, abs(h) + max(grid.spacing)))
    return float(np.max(np.abs(d1 - d2)[mask], initial=0.0))


def gradient(u):
    """Second-order finite-difference gradient (centered inside, one-sided at edges)."""
    grid = u.grid
    comps = [np.gradient(u.values, grid.spacing[s], axis=s + 1, edge_order=2)
             for s in range(grid.n)]
    return VectorField(grid, np.stack(comps, axis=-1))


def divergence(w):
    """Second-order divergence; the negative adjoint of :func:`gradient` for
    fields vanishing within two nodes of the boundary."""
    grid = w.grid
    out = sum(np.gradient(w.values[..., s], grid.spacing[s], axis=s + 1, edge_order=2)
              for s in range(grid.n))
    return ScalarField(grid, out)


# -- geometry and norms -----------------------------------------------------------

@dataclass(frozen=True)
class Cylinder:
    """Backward parabolic cylinder ``B_radius(x0) x (t0 - radius^2, t0)``."""

    x0: tuple
    t0: float
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if not self.radius > 0:
            raise DomainError("cylinder radius must be positive")

    def scaled(self, factor):
        return Cylinder(self.x0, self.t0, self.radius * factor)

    def contains(self, other):
        d = math.dist(self.x0, other.x0)
        return (d + other.radius <= self.radius + _TOL
                and other.t0 <= self.t0 + _TOL
                and other.t0 - other.radius**2 >= self.t0 - self.radius**2 - _TOL)


def ball_mask(grid, x0, rho):
    x = grid.coords()
    d2 = sum((x[s] - x0[s]) ** 2 for s in range(grid.n))
    return d2 < rho * rho


def region_mask(grid, region=None):
    """Space-time mask of a cylinder (the whole grid when ``region`` is None).

    A node belongs to the cylinder when ``|x - x0| < radius`` and
    ``t0 - radius^2 < t <= t0``; each level stands for the interval ending at it.
    """
    if region is None:
        return np.ones(grid.shape, dtype=bool)
    if len(region.x0) != grid.n:
        raise DomainError("cylinder dimension does not match grid")
    for s, (a, b) in enumerate(grid.extent):
        if region.x0[s] - region.radius < a - _TOL or region.x0[s] + region.radius > b + _TOL:
            raise DomainError("cylinder ball leaves the grid box")
    t_lo = region.t0 - region.radius**2
    tol = _TOL * max(1.0, abs(region.t0))
    if t_lo < grid.t0 - tol or region.t0 > grid.t_end + tol:
        raise DomainError("cylinder time window leaves the grid")
    times = grid.times
    levels = (times > t_lo + tol) & (times <= region.t0 + tol)
    mask = levels.reshape((-1,) + (1,) * grid.n) & ball_mask(grid, region.x0, region.radius)
    if not mask.any():
        raise DomainError("cylinder contains no grid nodes")
    return mask


def _as_values(F):
    return F.magnitude() if isinstance(F, _Field) else np.asarray(F, dtype=float)


def integrate(values, grid, mask=None):
    """Midpoint-rule integral: node weight ``cell volume * dt`` over the mask."""
    values = np.asarray(values, dtype=float)
    if mask is None:
        return float(grid.weight * values.sum())
    return float(grid.weight * values[mask].sum())


def slice_integrals(values, grid, mask=None):
    """Spatial integrals over the mask, one per time level the mask touches."""
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    axes = tuple(range(1, grid.n + 1))
    active = mask.any(axis=axes)
    sums = np.where(mask, values, 0.0).sum(axis=axes) * grid.cell_volume
    return sums[active]


def lq_norm(F, q, region=None):
    """``(int_Q |F|^q dz)^{1/q}`` over a cylinder."""
    if q < 1:
        raise InvalidInputError("q must be >= 1")
    grid = F.grid
    return integrate(_as_values(F) ** q, grid, region_mask(grid, region)) ** (1.0 / q)


def sup_slice_norm(F, q, region=None):
    """``(sup_t int_B |F(x,t)|^q dx)^{1/q}`` over the time levels of a cylinder."""
    if q < 1:
        raise InvalidInputError("q must be >= 1")
    grid = F.grid
    s = slice_integrals(_as_values(F) ** q, grid, region_mask(grid, region))
    return float(s.max()) ** (1.0 / q)


def diffquot_gradient_bound_check(F, rho, R, h, p=2.0, axis=0, x0=None):
    """``int_{B_rho} |tau_h F|^p / (|h|^p int_{B_R} |DF|^p)`` summed over all
    time levels; 0 when the denominator vanishes."""
    grid = F.grid
    if not 0 < rho < R:
        raise PreconditionError("need 0 < rho < R")
    if not abs(h) < (R - rho) / 2:
        raise PreconditionError("need |h| < (R - rho)/2")
    x0 = tuple(0.5 * (a + b) for a, b in grid.extent) if x0 is None else tuple(x0)
    for s, (a, b) in enumerate(grid.extent):
        if x0[s] - R < a - _TOL or x0[s] + R > b + _TOL:
            raise DomainError("B_R leaves the grid box")
    inner = _spacetime(grid, ball_mask(grid, x0, rho))
    outer = _spacetime(grid, ball_mask(grid, x0, R))
    num = integrate(np.abs(tau_h(F, axis, h).values) ** p, grid, inner)
    den = abs(h) ** p * integrate(gradient(F).magnitude() ** p, grid, outer)
    return num / den if den > 0 else 0.0


# -- snapshot format -------------------------------------------------------------

SNAPSHOT_MAGIC = b"DGFL"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4s7I")  # magic, version, n, nx[4], nt  (32 bytes)


def write_snapshot(path, field):
    """Write a scalar field as a 32-byte header plus little-endian float64 values."""
    grid = field.grid
    if grid.n > 4:
        raise InvalidInputError("snapshot format holds at most 4 spatial axes")
    nx = list(grid.nx) + [0] * (4 - grid.n)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n, *nx, grid.nt))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_snapshot(path):
    """Read a snapshot; returns ``(values, header)`` with ``header`` holding
    ``version``, ``n``, ``nx`` and ``nt``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvalidInputError("file too short for a snapshot header")
    magic, version, n, *rest = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise InvalidInputError("bad snapshot magic")
    nx, nt = tuple(rest[:n]), rest[4]
    count = nt * math.prod(nx)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != count:
        raise InvalidInputError(f"expected {count} values, found {data.size}")
    header = {"version": version, "n": n, "nx": nx, "nt": nt}
    return data.reshape((nt,) + nx).astype(float), header


def write_field_csv(path, field, header_lines=()):
    """Long-format CSV: ``t, x1..xn, value`` for every node."""
    grid = field.grid
    x = grid.coords().reshape(grid.n, -1)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{s + 1}" for s in range(grid.n)] + ["value"])
        for k, t in enumerate(grid.times):
            vals = field.values[k].ravel()
            for j in range(vals.size):
                w.writerow([repr(float(t))] + [repr(float(c)) for c in x[:, j]]
                           + [repr(float(vals[j]))])
