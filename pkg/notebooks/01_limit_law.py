"""Corank of a sparse random matrix over F_2 against its limiting law.

Run with ``python3 notebooks/01_limit_law.py``. Takes a few seconds on
one core.
"""

import numpy as np

from fpcok import limiting_law, simulate, tv_distance, two_point_ensemble
from fpcok.experiments import moment_from_histogram

print("== LIMITING LAW ==========================================")
law = limiting_law(2)
for k in range(5):
    print(f"   P(corank = {k}) = {law[k]:.6f}")
print(f"   mass beyond k=4: {1 - sum(law[k] for k in range(5)):.2e}")

# %% entries are 1 with probability 2 ln(n)/n, else 0
print("== SIMULATION AT c = 2 ===================================")
n, samples = 400, 4000
run = simulate(two_point_ensemble(2, n, 2.0, seed=7), samples)
hist = run.histogram()
print(f"   n = {n}, {samples} samples, alpha = {run.ensemble.law.alpha:.4f}")
print("    k   observed   limit")
for k in range(5):
    print(f"   {k:2d}   {hist.frequency(k):.4f}     {law[k]:.4f}")
print(f"   TV distance: {tv_distance(hist, law):.4f}")

# %% E #Sur(cok, F_2^r) is 1 for every r in the limit
print("== SURJECTION MOMENTS ====================================")
for r in (1, 2, 3):
    est = moment_from_histogram(hist, r)
    print(f"   r = {r}: {est.mean:.3f} +- {est.stderr:.3f}")

# %% below the threshold zero columns force corank up
print("== SIMULATION AT c = 0.5 =================================")
low = simulate(two_point_ensemble(2, n, 0.5, seed=7), 1000)
print(f"   mean corank {np.mean(low.coranks):.2f} vs limit {sum(k * law[k] for k in range(30)):.2f}")
print(f"   TV distance: {tv_distance(low.histogram(), law):.4f}")
