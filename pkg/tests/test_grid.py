import math

import numpy as np
import pytest

from degenflow.errors import DomainError, InvalidInputError, PreconditionError
from degenflow.grid import (Cylinder, Grid, ScalarField, VectorField, commutation_check,
                            delta_h, diffquot_gradient_bound_check, divergence, gradient,
                            inner_mask, integrate, lq_norm, parts_identity_check,
                            product_rule_check, read_snapshot, region_mask, slice_integrals,
                            sup_slice_norm, tau_h, write_field_csv, write_snapshot)


@pytest.fixture
def grid():
    return Grid.cube(2, 0.0, 1.0, 17, 0.05, 3)


def random_field(grid, rng):
    return ScalarField(grid, rng.standard_normal(grid.shape))


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        Grid.cube(2, 0, 1, 2, 0.1, 3)
    with pytest.raises(InvalidInputError):
        Grid(2, ((0, 1), (1, 0)), (5, 5), 0.1, 3)
    with pytest.raises(InvalidInputError):
        Grid.cube(2, 0, 1, 5, 0.0, 3)


def test_fields_immutable_and_finite(grid):
    f = ScalarField.constant(grid, 1.0)
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 2.0
    with pytest.raises(InvalidInputError):
        ScalarField(grid, np.full(grid.shape, np.inf))
    with pytest.raises(InvalidInputError):
        VectorField(grid, np.zeros(grid.shape))


def test_tau_constant_and_linear(grid):
    assert np.all(tau_h(ScalarField.constant(grid, 3.0), 0, 2 / 16).values == 0)
    lin = ScalarField.from_function(grid, lambda x, t: 2 * x[0] - 3 * x[1])
    h = 3 / 16
    mask = np.broadcast_to(inner_mask(grid, h), grid.shape)
    assert np.allclose(tau_h(lin, 1, h).values[mask], -3 * h, atol=1e-14)
    assert np.allclose(delta_h(lin, 0, -h).values[mask], 2.0, atol=1e-13)


def test_tau_requires_grid_multiple(grid):
    with pytest.raises(DomainError):
        tau_h(ScalarField.constant(grid, 0.0), 0, 0.1)
    with pytest.raises(DomainError):
        tau_h(ScalarField.constant(grid, 0.0), 0, 0.5)
    with pytest.raises(DomainError):
        tau_h(ScalarField.constant(grid, 0.0), 2, 1 / 16)


def test_tau_linear_in_field(grid, rng):
    F, G = random_field(grid, rng), random_field(grid, rng)
    lhs = tau_h(F * 2.0 + G, 0, 1 / 16).values
    rhs = 2.0 * tau_h(F, 0, 1 / 16).values + tau_h(G, 0, 1 / 16).values
    assert np.allclose(lhs, rhs, atol=1e-13)


def test_tau_commutes_across_axes(grid, rng):
    F = random_field(grid, rng)
    a = tau_h(tau_h(F, 0, 2 / 16), 1, -1 / 16).values
    b = tau_h(tau_h(F, 1, -1 / 16), 0, 2 / 16).values
    mask = np.broadcast_to(inner_mask(grid, 2 / 16), grid.shape)
    assert np.allclose(a[mask], b[mask], rtol=0, atol=1e-14)


def test_parts_identity(grid, rng):
    F = random_field(grid, rng)
    h = 2 / 16
    gv = rng.standard_normal(grid.shape)
    gv[:, ~inner_mask(grid, h)] = 0
    G = ScalarField(grid, gv)
    assert parts_identity_check(F, G, 0, h) <= 1e-12 * np.abs(gv).sum() * grid.weight / h
    assert parts_identity_check(F, ScalarField.constant(grid, 0.0), 1, h) == 0.0
    with pytest.raises(PreconditionError):
        parts_identity_check(F, F, 0, h)


def test_product_rule_and_commutation(grid, rng):
    F, G = random_field(grid, rng), random_field(grid, rng)
    assert product_rule_check(F, G, 1, 1 / 16) <= 1e-12 * 16 * 16
    assert commutation_check(F, 0, 2 / 16) <= 1e-12 * 16 * 16 * 16


def test_gradient_linear_exact(grid):
    lin = ScalarField.from_function(grid, lambda x, t: 2 * x[0] - 3 * x[1] + t)
    d = gradient(lin).values
    assert np.allclose(d[..., 0], 2.0) and np.allclose(d[..., 1], -3.0)
    w = VectorField(grid, np.ones(grid.shape + (2,)))
    assert np.allclose(divergence(w).values, 0.0)


def test_gradient_divergence_adjoint(rng):
    g = Grid.cube(2, 0, 1, 33, 0.1, 2)
    inner = inner_mask(g, 2.5 / 32)
    uv = rng.standard_normal(g.shape) * inner
    wv = rng.standard_normal(g.shape + (2,)) * inner[..., None]
    u, w = ScalarField(g, uv), VectorField(g, wv)
    lhs = np.sum(gradient(u).values * wv)
    rhs = -np.sum(uv * divergence(w).values)
    assert abs(lhs - rhs) <= 1e-12 * np.sum(np.abs(gradient(u).values * wv))


def test_delta_h_converges_first_order():
    errs = []
    for N in (33, 65, 129):
        g = Grid.cube(2, 0, 1, N, 0.1, 1)
        F = ScalarField.from_function(g, lambda x, t: np.sin(2 * x[0]) * np.cos(x[1]))
        h = 1 / (N - 1)
        d = delta_h(F, 0, h).values
        exact = 2 * np.cos(2 * g.coords()[0]) * np.cos(g.coords()[1])
        m = inner_mask(g, h)
        errs.append(math.sqrt(np.sum((d[0] - exact)[m] ** 2) * g.cell_volume))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 0.9)


def test_region_mask_geometry(grid):
    c = Cylinder((0.5, 0.5), 0.1, 0.3)
    m = region_mask(grid, c)
    # levels t = 0.05 and 0.1 lie in (0.1 - 0.09, 0.1]
    assert list(m.any(axis=(1, 2))) == [False, True, True]
    with pytest.raises(DomainError):
        region_mask(grid, Cylinder((0.1, 0.5), 0.1, 0.3))
    with pytest.raises(DomainError):
        region_mask(grid, Cylinder((0.5, 0.5), 0.1, 0.5))


def test_norms_basic(grid):
    c = Cylinder((0.5, 0.5), 0.1, 0.3)
    one = ScalarField.constant(grid, 1.0)
    m = region_mask(grid, c)
    assert lq_norm(one, 1, c) == pytest.approx(m.sum() * grid.weight)
    F = ScalarField.from_function(grid, lambda x, t: x[0] + t)
    assert lq_norm(F * -3.0, 2, c) == pytest.approx(3 * lq_norm(F, 2, c))
    assert sup_slice_norm(F * 2.0, 3, c) == pytest.approx(2 * sup_slice_norm(F, 3, c))
    small = Cylinder((0.5, 0.5), 0.1, 0.2)
    assert lq_norm(F, 2, small) <= lq_norm(F, 2, c)
    assert slice_integrals(one.values, grid, m).size == 2
    assert integrate(one.values, grid) == pytest.approx(grid.weight * one.values.size)


def test_gaussian_bump_refinement():
    # int over [-1,1]^2 of exp(-50|x|^2) = (sqrt(pi/50) erf(sqrt(50)))^2
    exact = (math.sqrt(math.pi / 50) * math.erf(math.sqrt(50))) ** 2
    errs = []
    for N in (9, 17, 33):
        g = Grid.cube(2, -1, 1, N, 1.0, 2)
        F = ScalarField.from_function(g, lambda x, t: np.exp(-50 * (x[0] ** 2 + x[1] ** 2)))
        val = slice_integrals(F.values, g)[0]
        errs.append(abs(val - exact))
    assert errs[1] < 1e-3 * errs[0] and errs[2] < 1e-14


def test_diffquot_gradient_bound(grid):
    g = Grid.cube(2, 0, 1, 65, 0.1, 2)
    assert diffquot_gradient_bound_check(ScalarField.constant(g, 1.0), 0.1, 0.4, 1 / 64) == 0
    lin = ScalarField.from_function(g, lambda x, t: 3 * x[0])
    r = diffquot_gradient_bound_check(lin, 0.2, 0.4, 2 / 64, p=2)
    assert 0 < r <= 1.0
    F = ScalarField.from_function(g, lambda x, t: np.sin(3 * x[0] + x[1]))
    rs = [diffquot_gradient_bound_check(F, 0.2, 0.4, k / 64, p=3) for k in (4, 2, 1)]
    # ratios settle as h shrinks
    assert abs(rs[2] - rs[1]) < abs(rs[1] - rs[0]) and max(rs) < 1.0
    with pytest.raises(PreconditionError):
        diffquot_gradient_bound_check(F, 0.2, 0.4, 8 / 64)


def test_snapshot_roundtrip(tmp_path, grid, rng):
    F = random_field(grid, rng)
    path = tmp_path / "f.dgfl"
    write_snapshot(path, F)
    raw = path.read_bytes()
    assert raw[:4] == b"DGFL" and len(raw) == 32 + 8 * F.values.size
    vals, header = read_snapshot(path)
    assert np.array_equal(vals, F.values)
    assert header == {"version": 1, "n": 2, "nx": (17, 17), "nt": 3}
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(InvalidInputError):
        read_snapshot(path)


def test_field_csv(tmp_path):
    g = Grid.cube(2, 0, 1, 3, 0.5, 2)
    write_field_csv(tmp_path / "f.csv", ScalarField.constant(g, 2.0), ["seed=0"])
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "# seed=0" and lines[1] == "t,x1,x2,value"
    assert len(lines) == 2 + 2 * 9
