"""Tour of the autodiff core: tensors, the tape, backward, gradcheck.

Every tensor is a rank-4 float32 array (N, C, H, W). Scalars live as
(1,1,1,1), matrices as (1,1,R,C). Ops only record onto a tape that is
currently open; outside a tape they are plain numpy math.
"""

import numpy as np

from lmfn import (Tape, Tensor, backward, conv2d, gradcheck, mse_loss, relu,
                  sigmoid)

# -- forward + backward on a small conv graph --------------------------------

rng = np.random.default_rng(0)
x = Tensor(rng.standard_normal((1, 2, 6, 6)).astype(np.float32), requires_grad=True)
w = Tensor((rng.standard_normal((3, 2, 3, 3)) * 0.2).astype(np.float32),
           requires_grad=True)
b = Tensor(np.zeros((1, 3, 1, 1), np.float32), requires_grad=True)
target = Tensor(rng.standard_normal((1, 3, 6, 6)).astype(np.float32))

with Tape() as tape:
    y = relu(conv2d(x, w, b, padding=1))
    loss = mse_loss(y, target)

print(f"recorded {len(tape)} ops, loss = {loss.item():.4f}")

backward(loss, tape)
print("grad shapes:", x.grad.shape, w.grad.shape, b.grad.shape)
print(f"|dL/dw| mean = {np.abs(w.grad).mean():.5f}")

# gradients accumulate across uses of the same tensor; zero them between runs
tape.zero_grad()

# -- outside a tape nothing is recorded ---------------------------------------

z = sigmoid(x)
print("\nno tape, no history: sigmoid output is just data,",
      "min/max =", f"{z.data.min():.3f}/{z.data.max():.3f}")

# -- gradcheck: finite differences vs the tape --------------------------------

xc = Tensor(np.zeros((1, 2, 5, 5), np.float32), requires_grad=True)
wc = Tensor(np.zeros((2, 2, 3, 3), np.float32), requires_grad=True)
bc = Tensor(np.zeros((1, 2, 1, 1), np.float32), requires_grad=True)
report = gradcheck(lambda: sigmoid(conv2d(xc, wc, bc, padding=1)),
                   [xc, wc, bc], labels=["x", "w", "b"], name="conv+sigmoid")
print()
print(report)
assert report.passed
