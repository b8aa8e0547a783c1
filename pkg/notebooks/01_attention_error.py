"""Approximate attention next to the exact product.

Builds one Gaussian instance, runs the sortLSH path and prints how far the
approximation lands from ``D^{-1} A V`` in operator norm. Run with
``python notebooks/01_attention_error.py``.
"""

import numpy as np

from hyperattn import HyperParams, exact_attention, hyper_attention, operator_norm
from hyperattn.core import softmax_matrix
from hyperattn.synthetic import gaussian_inputs

n, d = 2048, 32
inputs = gaussian_inputs(n, d, seed=0)
exact = exact_attention(inputs.q, inputs.k, inputs.v)

# The bound scales with both the softmax matrix and V
scale = operator_norm(softmax_matrix(inputs.q, inputs.k)) * operator_norm(inputs.v)

for b, m in [(64, 64), (128, 128), (256, 256), (512, 512)]:
    out = hyper_attention(inputs, params=HyperParams(block_size=b, m=m, seed=1))
    err = operator_norm(out.attention - exact)
    print(f"b={b:4d} m={m:4d}  err/scale = {err / scale:.3f}  mask entries = {out.mask_used.nnz}")

# Row sums on their own are much more accurate than the product
out = hyper_attention(inputs, params=HyperParams(block_size=128, m=128, seed=1))
a_rows = np.exp(inputs.q @ inputs.k.T - out.shift).sum(axis=1)
print("median relative row-sum error:", np.median(np.abs(out.d_tilde / a_rows - 1)))
