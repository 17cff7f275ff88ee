"""
Reverse-mode gradients and the selective scan
=============================================

Builds a small expression on the numpy tensor engine, compares its
gradient with finite differences, then runs the selective scan against a
plain python loop over time steps.
"""
import numpy as np

from hdmba import tensor as T
from hdmba.ssm import selective_scan
from hdmba.tensor import Parameter, Tensor

rng = np.random.default_rng(0)

# a two-layer expression; backward() fills .grad on every Parameter
w = Parameter(rng.normal(size=(3, 4)))
x = Tensor(rng.normal(size=(5, 3)))
loss = T.silu(x @ w).sum()
loss.backward()


def f():
    return float(T.silu(x @ w).sum().data)


h = 1e-6
num = np.zeros_like(w.data)
for i in np.ndindex(w.shape):
    old = w.data[i]
    w.data[i] = old + h
    up = f()
    w.data[i] = old - h
    num[i] = (up - f()) / (2 * h)
    w.data[i] = old
print("max |analytic - numeric| :", np.abs(w.grad - num).max())

# selective scan: one batch, 12 steps, 3 channels, state size 4
L, d, n = 12, 3, 4
u = rng.normal(size=(1, L, d))
delta = rng.uniform(0.05, 0.5, size=(1, L, d))
A = -rng.uniform(0.5, 1.5, size=(d, n))
B, C = rng.normal(size=(1, L, n)), rng.normal(size=(1, L, n))
D = rng.normal(size=d)
y = selective_scan(*(Tensor(a) for a in (u, delta, A, B, C, D))).data

state = np.zeros((d, n))
ref = np.empty_like(u)
for t in range(L):
    state = np.exp(delta[0, t, :, None] * A) * state + delta[0, t, :, None] * B[0, t] * u[0, t, :, None]
    ref[0, t] = state @ C[0, t] + D * u[0, t]
print("max |scan - loop|        :", np.abs(y - ref).max())
