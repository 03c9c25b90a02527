#!/usr/bin/env python3
# Layer primitives: every forward pass ships with an analytic backward pass,
# and central finite differences confirm the gradients.

import numpy as np

from neuralign import kernel

rng = np.random.default_rng(0)

# ---- a linear layer, forward and backward -------------------------------
x = rng.normal(size=(4, 3))
w = rng.normal(size=(3, 2))
b = rng.normal(size=2)
out = kernel.linear_forward(x, w, b)
print("linear forward:", x.shape, "->", out.shape)

d_out = rng.normal(size=out.shape)
grads = kernel.linear_backward(x, w, d_out)
print("gradient shapes:", {name: g.shape for name, g in grads.d_params})

# finite-difference check on one weight entry
eps = 1e-6
w_hi, w_lo = w.copy(), w.copy()
w_hi[1, 1] += eps
w_lo[1, 1] -= eps
fd = ((kernel.linear_forward(x, w_hi, b) * d_out).sum()
      - (kernel.linear_forward(x, w_lo, b) * d_out).sum()) / (2 * eps)
analytic = dict(grads.d_params)["weight"][1, 1]
print(f"dL/dw[1,1]: analytic {analytic:.10f}  finite-diff {fd:.10f}")

# ---- temporal convolution (cross-correlation, zero padding) -------------
signal = rng.normal(size=(2, 3, 16))         # batch x channels x time
kernels = rng.normal(size=(5, 3, 4))         # out-ch x in-ch x width
conv = kernel.conv1d_forward(signal, kernels, np.zeros(5), stride=2, padding=1)
print("conv1d:", signal.shape, "->", conv.shape)

# ---- softmax cross-entropy over a batch of logits -----------------------
logits = rng.normal(size=(4, 6))
targets = [0, 1, 2, 3]
loss, d_logits = kernel.softmax_cross_entropy(logits, targets)
print(f"cross-entropy loss {loss:.4f}; gradient rows sum to "
      f"{np.abs(d_logits.sum(axis=1)).max():.2e} (softmax minus one-hot)")

# a row of equal logits is maximally uncertain: loss is exactly ln(N)
uniform_loss, _ = kernel.softmax_cross_entropy(np.zeros((1, 6)), [3])
print(f"uniform 6-way loss {uniform_loss:.6f} == ln 6 ({np.log(6):.6f})")
