# %% [markdown]
# # Measuring both sides of the estimates
#
# The constants are unknown, so the interesting number is the ratio and how
# it moves under refinement.

# %%
from degenflow.estimates import (caccioppoli_report, diffquot_ladder,
                                 higher_integrability_report, uniform_estimate_report)
from degenflow.flux import Params
from degenflow.grid import Grid
from degenflow.solver import problem_from_solution, solve, stationary_quadratic

params = Params(3.0, 0.5, 0.1, 2)
R = 0.5
reports = {}
for points in (33, 65):
    grid = Grid.cube(2, 0.0, 1.0, points, (R / 16) ** 2, 257)
    spec = problem_from_solution(params, grid, stationary_quadratic(2))
    u = solve(spec).field
    reports[points] = [caccioppoli_report(u, params, R, f=spec.f),
                       uniform_estimate_report(u, spec, R / 2),
                       higher_integrability_report(u, spec, R / 2)]

# %%
for a, b in zip(reports[33], reports[65]):
    print(f"{a.estimate_id:22s} {a.ratio:.3e} -> {b.ratio:.3e}")
print(reports[65][0].summary())

# %% difference quotients should scale like h^2 (shifts must stay below rho/4)
dx = grid.spacing[0]
ladder, ok = diffquot_ladder(u, spec, R / 2, [2 * dx, dx])
print([f"{r.lhs / r.extras['h'] ** 2:.3e}" for r in ladder], "within factor 2:", ok)
