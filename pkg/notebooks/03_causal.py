"""Causal attention through the halving recursion.

The trace lists the off-diagonal blocks handed to the unmasked estimator;
with n = 2^k times the base size there are 2^k - 1 of them.
"""

import numpy as np

from hyperattn import HyperParams, causal_approx_d, causal_hyper_attention, exact_attention, operator_norm
from hyperattn.core import exact_causal_row_sums
from hyperattn.synthetic import gaussian_inputs

inputs = gaussian_inputs(4096, 16, seed=2)
params = HyperParams(causal_base_threshold=512, seed=2)

trace = []
d_tilde = causal_approx_d(inputs.q, inputs.k, params, trace)
print(f"{len(trace)} off-diagonal calls")
for entry in trace[:4]:
    print("  ", entry)

truth = exact_causal_row_sums(inputs.q, inputs.k)
print("max relative row-sum error:", float(np.max(np.abs(d_tilde / truth - 1))))

out = causal_hyper_attention(inputs, params)
exact = exact_attention(inputs.q, inputs.k, inputs.v, causal=True)
scale = operator_norm(exact_attention(inputs.q, inputs.k, np.eye(len(inputs.q)), causal=True)) * operator_norm(inputs.v)
print("operator-norm error relative to the bound scale:", operator_norm(out.attention - exact) / scale)
