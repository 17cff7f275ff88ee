"""
Window partitioning and the window scan module
==============================================

Splits a feature map into M x M windows, puts it back together, and shows
that a change inside one window leaves the WSSM output of every other
window untouched.
"""
import numpy as np

from hdmba.ssm import SsmConfig
from hdmba.tensor import Tensor, no_grad
from hdmba.wssm import WSSM, window_partition, window_reverse

rng = np.random.default_rng(1)
z = rng.normal(size=(10, 13, 6))          # H and W are not multiples of M

batch = window_partition(Tensor(z), 4)    # reflect padding up to 12 x 16
print("windows, tokens, channels :", batch.windows.shape, "grid", batch.grid)
print("roundtrip bitwise         :", window_reverse(batch).data.tobytes() == z.tobytes())

module = WSSM(6, 4, SsmConfig(d_state=4), rng=np.random.default_rng(2), dtype=np.float64)
with no_grad():
    base = module(Tensor(z)).data
    poked = z.copy()
    poked[1, 1] += 5.0                    # inside the top-left window
    moved = module(Tensor(poked)).data
# the scan is causal in row-major order, so row 0 of the window stays put as well
changed = np.abs(moved - base).max(axis=-1) > 0
print("changed rows, cols        :", np.argwhere(changed).min(0), "to", np.argwhere(changed).max(0))
