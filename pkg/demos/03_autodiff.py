"""The reverse-mode engine in isolation: gradients, checks, and Adam.

Differentiates a small expression, verifies one gradient against central
finite differences, and minimizes a quadratic with the Adam optimizer.
"""

import numpy as np

from talkingface import Adam, Tensor, backward, no_grad
from talkingface import autodiff as ad

# d/dx of sum((x @ w)^2) by hand vs by tape
rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
y = ad.matmul(x, w)
loss = ad.tensor_sum(ad.mul(y, y))
backward(loss)
manual = 2.0 * (x.data @ w.data) @ w.data.T
print("matmul gradient max |tape - manual|:", np.abs(x.grad - manual).max())

# finite-difference spot check on a composite
h = 1e-5
probe = x.data.copy()
probe[1, 2] += h
up = float(np.sum((probe @ w.data) ** 2))
probe[1, 2] -= 2 * h
down = float(np.sum((probe @ w.data) ** 2))
fd = (up - down) / (2 * h)
print(f"finite difference at x[1,2]: {fd:.6f} vs tape {x.grad[1, 2]:.6f}")

# inference mode records no graph
with no_grad():
    silent = ad.mul(x, x)
print("recorded under no_grad:", silent.requires_grad)

# Adam walks a quadratic bowl to its center
target = rng.normal(size=5)
p = Tensor(np.zeros(5), requires_grad=True)
opt = Adam([p], lr=0.05)
for step in range(400):
    diff = ad.sub(p, target)
    loss = ad.tensor_sum(ad.mul(diff, diff))
    opt.zero_grad()
    backward(loss)
    opt.step()
print("Adam residual after 400 steps:", np.abs(p.data - target).max())
