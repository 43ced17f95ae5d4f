# %% [markdown]
# # Difference quotients on a grid
#
# Shifts are integer multiples of the spacing, so the discrete identities
# hold up to rounding.

# %%
import numpy as np

from degenflow.grid import (Cylinder, Grid, ScalarField, commutation_check, delta_h,
                            diffquot_gradient_bound_check, inner_mask, lq_norm,
                            product_rule_check)

grid = Grid.cube(2, 0.0, 1.0, 33, 0.05, 3)
rng = np.random.default_rng(1)
F = ScalarField(grid, rng.standard_normal(grid.shape))
G = ScalarField(grid, rng.standard_normal(grid.shape))
h = 2 * grid.spacing[0]
print("product rule defect", product_rule_check(F, G, 0, h))
print("commutation defect ", commutation_check(F, 1, h))

# %% on a smooth field the quotient approaches the derivative
S = ScalarField.from_function(grid, lambda x, t: np.sin(3 * x[0]) + x[1])
d = delta_h(S, 0, grid.spacing[0]).values[0]
exact = 3 * np.cos(3 * grid.coords()[0])
m = inner_mask(grid, grid.spacing[0])
print("max |Delta_h S - D_1 S|", np.abs(d - exact)[m].max())

# %% norms over a backward cylinder and the difference-quotient bound
cyl = Cylinder((0.5, 0.5), grid.t_end, 0.3)
print("L2 norm on Q_0.3:", lq_norm(S, 2, cyl))
for k in (3, 2, 1):
    print(k, diffquot_gradient_bound_check(S, 0.2, 0.4, k * grid.spacing[0], p=3))
