"""
Moran generator converging to Fleming-Viot
==========================================

Apply the Moran generator exactly at population sizes N = 10 .. 10^4 and
compare with the Fleming-Viot generator at the same frequencies.  The gap
shrinks like 1/N, so N * gap levels off.
"""
import numpy as np

from fvlab import (DualFunction, EmpiricalMeasure, ModelParams, MutationKernel, dual_generator,
                   fv_generator, generator_bound, moran_generator)

params = ModelParams(1.0, 2.0, MutationKernel(1.0, [0.4, 0.6], 0.5, [[0.9, 0.1], [0.2, 0.8]]))
f = DualFunction(np.array([[0.3, -0.8], [0.5, 0.1]]), 2)
w = np.array([0.9, 0.2])

for N in (10, 100, 1000, 10_000):
    m = EmpiricalMeasure([3 * N // 10, 7 * N // 10])
    gap = abs(moran_generator(params.with_N(N), w, f, m) - fv_generator(params, w, f, m.frequencies()))
    print(f"N={N:>6}  gap={gap:.3e}  N*gap={N * gap:.4f}")

# the Fleming-Viot generator and the dual generator agree exactly
m = np.array([0.3, 0.7])
print("FV   ", fv_generator(params, w, f, m))
print("dual ", dual_generator(params, w, f, m))
print("bound", generator_bound(params, f))
