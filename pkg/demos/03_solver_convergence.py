# %% [markdown]
# # Backward Euler on a manufactured solution
#
# The tilted wave keeps `|Du|` well above the degenerate threshold, so the
# scheme should converge at second order in space.

# %%
import math

import numpy as np

from degenflow.flux import Params
from degenflow.grid import Grid, integrate
from degenflow.solver import problem_from_solution, solve, tilted_wave

params = Params(3.0, 0.5, 0.1, 2)
sol = tilted_wave(2, 0.1, "linear")
errs = []
for points in (17, 33, 65):
    spec = problem_from_solution(params, Grid.cube(2, 0.0, 1.0, points, 0.05, 11), sol)
    res = solve(spec)
    e = res.values - spec.boundary.values
    errs.append(math.sqrt(integrate(e * e, spec.grid)))
    print(points, f"L2 error {errs[-1]:.3e}", "max Newton iters", res.iters.max())

# %%
print("observed orders", np.log2(np.array(errs[:-1]) / np.array(errs[1:])))
