"""Attention fusion starts as the identity and wakes up as it trains.

ALFM mixes the stacked outputs of all decoder blocks through a softmax
similarity matrix, scaled by theta. ACFM gates the last block's output
through a factorized spatial+channel conv, scaled by alpha. Both scales
start at zero, so an untrained model routes features straight through.
"""

import numpy as np

from lmfn import Acfm, Alfm, Tensor

rng = np.random.default_rng(1)

# -- ALFM ---------------------------------------------------------------------

stack = Tensor(rng.uniform(-1, 1, (4, 8, 6, 6)).astype(np.float32))  # 4 layers
alfm = Alfm()
out = alfm(stack)
print("theta=0: output is the input, bit for bit ->",
      np.array_equal(out.data, stack.data))

alfm.theta.data[...] = 0.5
out = alfm(stack)
delta = np.abs(out.data - stack.data).max()
print(f"theta=0.5: attention mixing kicks in, max |delta| = {delta:.4f}")

# the similarity matrix would need (layers*channels)^2 floats; a budget
# guard refuses stacks that would blow up quietly
big = Tensor(np.zeros((64, 64, 4, 4), np.float32))
try:
    Alfm(attention_budget=1 << 10)(big)
except ValueError as e:
    print("budget guard:", e)

# -- ACFM ---------------------------------------------------------------------

x = Tensor(rng.uniform(-1, 1, (2, 8, 6, 6)).astype(np.float32))
acfm = Acfm(rng)
print()
print("alpha=0: output is the input, bit for bit ->",
      np.array_equal(acfm(x).data, x.data))

acfm.alpha.data[...] = 0.3
gated = acfm(x)
print(f"alpha=0.3: gated residual active, max |delta| = "
      f"{np.abs(gated.data - x.data).max():.4f}")
print(f"acfm carries only {acfm.param_count()} parameters "
      f"(3x3 spatial + 3x1 channel kernels, two biases, alpha)")
