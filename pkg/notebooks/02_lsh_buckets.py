"""Sign hashes with Gray-coded bucket ids.

Measures how often two vectors at a fixed angle share a bucket or land in
neighbouring buckets, and compares with the closed forms.
"""

import math

import numpy as np

from hyperattn.lsh import adjacent_bucket_probability, collision_probability, gray_rank

rng = np.random.default_rng(0)
trials, d, r = 20_000, 16, 4
weights = 1 << np.arange(r)

print(" angle   same   formula   adjacent   formula")
for theta in np.linspace(0.1, math.pi - 0.1, 6):
    x = np.eye(d)[0]
    y = math.cos(theta) * np.eye(d)[0] + math.sin(theta) * np.eye(d)[1]
    planes = rng.standard_normal((trials, r, d))
    hx = gray_rank(((planes @ x) > 0).astype(np.int64) @ weights)
    hy = gray_rank(((planes @ y) > 0).astype(np.int64) @ weights)
    gap = (hx - hy) % (1 << r)
    same = np.mean(gap == 0)
    adj = np.mean((gap == 1) | (gap == (1 << r) - 1))
    print(f" {theta:5.2f}  {same:.3f}   {collision_probability(theta, r):.3f}"
          f"     {adj:.3f}     {adjacent_bucket_probability(theta, r):.3f}")
