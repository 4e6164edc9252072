"""A tour of the reverse-mode tape that powers all training here.

Tensors record a closure per operation; backward() replays them in
reverse topological order.  Nothing is recorded when no input wants
gradients, which is what makes inference cheap later on.
"""

import numpy as np

from smallwav import Rng, Tensor
from smallwav.tensor import attention_core, conv1d, gelu, matmul, tmean, tsum

rng = Rng(0)

print("== a scalar chain ==")
x = Tensor(np.array([1.5, -2.0, 0.5]), requires_grad=True)
y = tsum(gelu(x))
y.backward()
print("x      :", x.data)
print("dy/dx  :", x.grad)

print()
print("== the same gradient by central differences ==")
h = 1e-6
fd = np.zeros(3)
for i in range(3):
    hi = x.data.copy()
    lo = x.data.copy()
    hi[i] += h
    lo[i] -= h
    fd[i] = (float(tsum(gelu(Tensor(hi))).data) - float(tsum(gelu(Tensor(lo))).data)) / (2 * h)
print("numeric:", fd)
print("max gap:", np.abs(fd - x.grad).max())

print()
print("== structured ops carry gradients too ==")
wave = Tensor(rng.normal((2, 32)), requires_grad=True)
kernels = Tensor(rng.normal((4, 2, 8), std=0.2), requires_grad=True)
frames = conv1d(wave, kernels, stride=4)
print("conv1d (2, 32) -> ", frames.shape)

q = Tensor(rng.normal((5, 8)), requires_grad=True)
scores = attention_core(q, q, q, n_heads=2)
loss = tmean(matmul(scores, Tensor(rng.normal((8, 3)))))
loss.backward()
print("attention grad reaches q with shape", q.grad.shape)

print()
print("== no tape without requires_grad ==")
a = Tensor(rng.normal((64, 64)))
b = Tensor(rng.normal((64, 64)))
out = matmul(a, b)
print("matmul of two frozen tensors keeps requires_grad =", out.requires_grad)
