"""
The SMO solver against brute force
==================================

On tiny problems the SVM dual can be solved by trying every assignment of
each multiplier to {0, C, free}. The SMO solver should land on the same
optimum.
"""

# %%
import numpy as np

from etcml import KernelSpec, TrainConfig, gram, qp_oracle, train_binary_smo
from etcml.svm import dual_objective

rng = np.random.default_rng(0)
for trial in range(5):
    x = rng.standard_normal((6, 2))
    y = np.array([1, -1, 1, -1, 1, -1], dtype=float)
    spec = KernelSpec("rbf", gamma=0.5)
    model = train_binary_smo(x, y, TrainConfig(c=1.0), spec)
    oracle = qp_oracle(x, y, 1.0, spec)
    ours = dual_objective(model.alpha, y, gram(spec, x))
    print(f"trial {trial}: SMO {ours:.8f}  oracle {oracle.objective:.8f}  "
          f"updates {model.iterations}")
