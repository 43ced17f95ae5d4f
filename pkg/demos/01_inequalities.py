# %% [markdown]
# # Sampling the structural inequalities
#
# Each gap operation returns a sample whose `gap` is `rhs - lhs`; a negative
# minimum would be a counterexample.

# %%
import numpy as np

from degenflow.flux import Params, eval_G
from degenflow.inequality_lab import (brasco_monotonicity_gap, certify_G_bounds,
                                      compute_c_p_delta, run_lemma_suite, sample_pairs)

rng = np.random.default_rng(0)
xi, eta = sample_pairs(rng, 20_000, 2, 0.5)
sample = brasco_monotonicity_gap(xi, eta, 3.0)
print("monotonicity min_gap", sample.min_gap())

# %% the lower constant of G_delta is negative for p > 2, so only the upper bound is tight
for p in (2.0, 3.0, 4.0):
    print(p, compute_c_p_delta(p, 0.5))

t = np.linspace(0, 100, 2001)
low, up = certify_G_bounds(3.0, 0.5, t)
print("G bounds hold:", low.holds(), up.holds())
print("G(10) at p=3:", float(eval_G(10.0, Params(3.0, 0.5))))

# %% a small run of the full suite
rows = run_lemma_suite([2.0, 3.0], [0.5], [2], samples=5_000)
for r in rows:
    print(f"{r.lemma_id:22s} min_gap={r.min_gap: .2e}")
