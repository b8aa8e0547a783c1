"""Column concentration of the softmax matrix as n grows.

alpha is n times the largest squared column norm of D^{-1} A. For random
Gaussian inputs alpha / n tends to fall with n, but a single extreme key
can make one draw jump, so the trend is noisy seed by seed.
"""

import numpy as np

from hyperattn.diagnostics import alpha_sweep

grid = [512, 1024, 2048, 4096]
table = np.array([[row.alpha_over_n for row in alpha_sweep(grid, d=16, seed=s)] for s in range(20)])
print("n      median alpha/n   90th pct")
for n, col in zip(grid, table.T):
    print(f"{n:5d}  {np.median(col):.4f}          {np.quantile(col, 0.9):.4f}")
monotone = np.all(np.diff(table, axis=1) <= 0, axis=1)
print(f"{monotone.sum()}/{len(monotone)} seeds non-increasing")
