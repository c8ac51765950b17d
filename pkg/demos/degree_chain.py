"""
The degree of the dual
======================

The degree of a dual function moves like a birth-death chain: deaths come
from resampling and parent-independent mutation, births from selection.
Starting at degree 1, the first move is a death with probability
beta' / (beta' + alpha).
"""
import numpy as np

from fvlab import DualFunction, ModelParams, MutationKernel, run_dual
from fvlab.stats import stream

w = np.array([0.8, 0.3])
f1 = DualFunction.indicator(0, 2)

for bp, alpha in [(1.0, 1.0), (3.0, 1.0), (1.0, 3.0)]:
    params = ModelParams(1.0, alpha, MutationKernel(bp, [0.5, 0.5]))
    deaths = 0
    for r in range(4000):
        st = run_dual(params, lambda s: w, np.inf, f1, stream(1, r), degree_cap=24, stop_on_degree_change=True)
        deaths += st.jump_log[-1].degree_after == 0
    print(f"beta'={bp:g} alpha={alpha:g}: deaths {deaths / 4000:.3f}, predicted {bp / (bp + alpha):.3f}")

# a single path from degree 4, printed jump by jump
params = ModelParams(1.0, 1.0, MutationKernel(1.0, [0.5, 0.5]))
rng = stream(7)
st = run_dual(params, lambda s: w, np.inf, DualFunction(rng.uniform(-1, 1, (2,) * 4), 2), rng)
print(st.jump_log_text())
print("degree path:", st.degree_path(), " absorbed at", round(st.absorption_time, 3))
