# %% [markdown]
# # Approaching the degenerate limit
#
# Halving `eps` (and the mollifier radius with it) should give nonincreasing
# distances between successive `H_{p/2}(Du)`.

# %%
from degenflow.estimates import eps_ladder
from degenflow.flux import Params
from degenflow.grid import Grid
from degenflow.solver import source_problem

grid = Grid.cube(2, 0.0, 1.0, 33, 0.01, 26)
make = lambda e: source_problem(Params(3.0, 0.5, e, 2), grid, mollifier=e)
reports, distances, monotone = eps_ladder(make, [0.1, 0.05, 0.025, 0.0125], R=0.5)
for r, d in zip(reports, distances):
    print(f"eps={r.params.eps:<7g} distance {d:.3e}  f gap {r.extras['f_distance']:.3e}")
print("monotone within 10%:", monotone)
