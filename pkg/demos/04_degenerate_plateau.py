# %% [markdown]
# # Data below the degeneracy threshold barely moves
#
# With `|Du| <= 1` the flux vanishes apart from the `eps` term, so tiny `eps`
# leaves the initial data almost untouched.

# %%
import numpy as np

from degenflow.flux import Params
from degenflow.grid import Grid
from degenflow.solver import face_gradient_norms, plateau_problem, solve

grid = Grid.cube(2, 0.0, 1.0, 33, 0.05, 21)
for eps in (1e-1, 1e-3, 1e-6):
    spec = plateau_problem(Params(3.0, 0.5, eps, 2), grid, 0.9)
    u = solve(spec).values
    print(f"eps={eps:.0e}  max slope {face_gradient_norms(u[0], grid).max():.3f}  "
          f"drift {np.abs(u[-1] - u[0]).max():.2e}")
