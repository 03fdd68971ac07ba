"""The two attention operators that fuse decoder features.

Both are residual gates around a zero-initialised scalar, so a freshly
built network passes features through them bit-exactly: multiplying the
attention branch by an exact 0.0 yields exact zeros, and adding those
to the input reproduces it bit for bit.
"""

from __future__ import annotations

from .blocks import Module, _kaiming_weight
from .tensor import (
    Tensor, add, conv2d, hadamard, matmul, matrix_transpose,
    reshape, scale, sigmoid, softmax,
)

__all__ = ["Alfm", "Acfm", "DEFAULT_ATTENTION_BUDGET"]

# ceiling on the (layers*channels)^2 attention matrix, in elements
DEFAULT_ATTENTION_BUDGET = 1 << 22


class Alfm(Module):
    """Layer fusion: self-attention across the channels of a layer stack.

    Operates on one batch element at a time. The stack of L feature maps
    (L, C, H, W) flattens to a matrix F of L*C rows; row-softmax of F @ F^T
    gives the mixing matrix M, and the output is theta * (M @ F) + F,
    reshaped back. The matrix M costs (L*C)^2 floats, which the budget
    guard bounds up front.
    """

    def __init__(self, attention_budget: int = DEFAULT_ATTENTION_BUDGET):
        super().__init__()
        self.theta = Tensor.zeros((1, 1, 1, 1), requires_grad=True)
        self.attention_budget = attention_budget

    def forward(self, stack: Tensor) -> Tensor:
        layers, c, h, w = stack.shape
        rows = layers * c
        if rows * rows > self.attention_budget:
            raise ValueError(
                f"attention matrix would hold {rows}x{rows} = {rows * rows} elements, "
                f"over the budget of {self.attention_budget}; lower the layer count or "
                f"channel width, or raise the budget")
        f = reshape(stack, (1, 1, rows, h * w))
        m = softmax(matmul(f, matrix_transpose(f)))
        out = add(scale(matmul(m, f), self.theta), f)
        return reshape(out, (layers, c, h, w))


class Acfm(Module):
    """Channel fusion: a factorized convolutional gate on one feature map.

    A single 3x3 kernel shared by every channel filters each plane, then a
    single length-3 kernel filters across the channel axis (zero padded by
    one on each side). The sigmoid of the result gates the input, and
    alpha scales the gated branch before the residual add. Fifteen
    parameters in total.
    """

    def __init__(self, rng):
        super().__init__()
        self.w_spatial = _kaiming_weight(rng, 1, 1, 3, 3)
        self.b_spatial = Tensor.zeros((1, 1, 1, 1), requires_grad=True)
        self.w_channel = _kaiming_weight(rng, 1, 1, 3, 1)
        self.b_channel = Tensor.zeros((1, 1, 1, 1), requires_grad=True)
        self.alpha = Tensor.zeros((1, 1, 1, 1), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        planes = reshape(x, (n * c, 1, h, w))
        s = conv2d(planes, self.w_spatial, self.b_spatial, padding=1)
        across = reshape(s, (n, 1, c, h * w))
        t = conv2d(across, self.w_channel, self.b_channel, padding=(1, 0))
        gate = sigmoid(reshape(t, (n, c, h, w)))
        return add(x, scale(hadamard(gate, x), self.alpha))

    @staticmethod
    def analytic_param_count() -> int:
        return 9 + 1 + 3 + 1 + 1
