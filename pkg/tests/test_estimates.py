import numpy as np
import pytest

from degenflow.errors import DomainError, InvalidInputError, PreconditionError
from degenflow.estimates import (REPORT_COLUMNS, caccioppoli_report, comparison_report,
                                 diffquot_estimate_report, diffquot_ladder, eps_ladder,
                                 gate_values, higher_integrability_report, is_halving,
                                 uniform_estimate_report, write_reports_csv)
from degenflow.flux import Params
from degenflow.grid import Grid, ScalarField
from degenflow.solver import constant_problem, solve, source_problem


@pytest.fixture
def grid():
    return Grid.cube(2, 0.0, 1.0, 33, 0.01, 26)


def linear_field(grid, slope):
    return ScalarField.from_function(grid, lambda x, t: slope * x[0])


def steep_field(grid):
    return ScalarField.from_function(grid, lambda x, t: 2 * np.sin(3 * x[0]) * np.cos(2 * x[1])
                                     + t)


def test_constant_field_has_zero_lhs(grid):
    params = Params(3, 0.5, 0.1, 2)
    spec = constant_problem(params, grid, 1.0)
    u = spec.boundary
    assert caccioppoli_report(u, params, 0.4).lhs == 0.0
    assert uniform_estimate_report(u, spec, 0.2).lhs == 0.0
    assert diffquot_estimate_report(u, spec, 0.2, 1 / 32).lhs == 0.0
    hi = higher_integrability_report(u, spec, 0.2)
    assert hi.extras["degenerate_part"] == 0.0 and hi.lhs == hi.extras["measure"]


def test_gate_vanishes_below_threshold(grid):
    params = Params(3, 0.5, 0.1, 2)
    u = linear_field(grid, 1.4)
    assert np.all(gate_values(u, params).values == 0.0)
    assert caccioppoli_report(u, params, 0.4).lhs == 0.0
    assert np.all(gate_values(linear_field(grid, 1.6), params).values > 0.0)


def test_gate_support_shrinks_with_delta(grid):
    u = steep_field(grid)
    supports = [np.count_nonzero(gate_values(u, Params(3, d, 0.1, 2)).values)
                for d in (0.1, 0.3, 0.6, 0.9)]
    assert supports == sorted(supports, reverse=True) and supports[0] > supports[-1]


def test_lhs_grows_with_cylinder(grid):
    params = Params(3, 0.5, 0.1, 2)
    spec = constant_problem(params, grid)
    u = steep_field(grid)
    a = higher_integrability_report(u, spec, 0.1)
    b = higher_integrability_report(u, spec, 0.2)
    assert a.extras["degenerate_part"] <= b.extras["degenerate_part"]
    assert a.rhs_terms["int(1+|Du|^p+|f_eps|^2)"] <= b.rhs_terms["int(1+|Du|^p+|f_eps|^2)"]
    c = caccioppoli_report(u, params, 0.3)
    d = caccioppoli_report(u, params, 0.45)
    assert c.rhs_terms["int(|Du|^p+1)"] <= d.rhs_terms["int(|Du|^p+1)"]


def test_report_fields(grid):
    params = Params(3, 0.5, 0.1, 2)
    spec = constant_problem(params, grid)
    u = steep_field(grid)
    r = uniform_estimate_report(u, spec, 0.2)
    assert r.lhs == pytest.approx(r.extras["sup_term"] + r.extras["gradient_term"])
    assert r.rhs == pytest.approx(r.prefactor * sum(r.rhs_terms.values()))
    assert r.ratio == pytest.approx(r.lhs / r.rhs)
    assert r.cylinder_outer.radius == pytest.approx(0.4)
    hi = higher_integrability_report(u, spec, 0.2)
    assert hi.rhs == pytest.approx(hi.prefactor * sum(hi.rhs_terms.values()) ** 2.0)


def test_geometry_errors(grid):
    params = Params(3, 0.5, 0.1, 2)
    spec = constant_problem(params, grid)
    u = steep_field(grid)
    with pytest.raises(DomainError):
        caccioppoli_report(u, params, 0.6)
    with pytest.raises(PreconditionError):
        diffquot_estimate_report(u, spec, 0.2, 2 / 32)
    with pytest.raises(DomainError):
        diffquot_estimate_report(u, spec, 0.2, 0.01)
    with pytest.raises(InvalidInputError):
        caccioppoli_report(u, Params(3, 0.5, 0.1, 3), 0.3)


def test_diffquot_ladder_on_smooth_field():
    g = Grid.cube(2, 0.0, 1.0, 65, 0.01, 21)
    spec = constant_problem(Params(3, 0.5, 0.1, 2), g)
    reports, ok = diffquot_ladder(steep_field(g), spec, 0.2, [3 / 64, 2 / 64, 1 / 64])
    assert ok and len(reports) == 3


def test_comparison_identical_is_zero(grid):
    params = Params(3, 0.5, 0.1, 2)
    u = steep_field(grid)
    z = ScalarField.constant(grid, 0.0)
    r = comparison_report(u, u, z, z, z, params, 0.3)
    assert r.lhs == 0.0 and r.extras["f_distance"] == 0.0 and r.ratio == 0.0


def test_is_halving():
    assert is_halving([0.1, 0.05, 0.025])
    assert not is_halving([0.1, 0.04])
    assert not is_halving([0.1])


def test_eps_ladder_small():
    g = Grid.cube(2, 0.0, 1.0, 17, 0.02, 26)
    make = lambda e: source_problem(Params(3, 0.5, e, 2), g, mollifier=e)
    reports, dist, mono = eps_ladder(make, [0.2, 0.1], 0.3)
    assert len(reports) == 1 and len(dist) == 1 and mono is None
    _, dist_t, _ = eps_ladder(make, [0.2, 0.1], 0.3, threads=2)
    assert dist_t == dist


def test_csv_and_summary(tmp_path, grid):
    params = Params(3, 0.5, 0.1, 2)
    r = caccioppoli_report(steep_field(grid), params, 0.4)
    write_reports_csv([r, r], tmp_path / "e.csv", ["seed=0"])
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "# seed=0" and lines[1] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 4 and lines[2] == lines[3]
    assert len(lines[2].split(",")) == len(REPORT_COLUMNS)
    text = r.summary()
    assert text.startswith("caccioppoli:") and "ratio" in text
