"""Parameter container plus the convolutional blocks the network is made of.

All convs are bias-carrying and initialised Kaiming-style (normal with
std = gain / sqrt(fan_in), zero bias) from an explicit rng, so a seed pins
every weight in the network. The gain depends on the conv's role: sqrt(2)
before a rectifier, 1 for purely linear convs, and a small factor for the
last conv of a residual branch. There is no normalisation anywhere in the
network, so without the role-dependent gains the activation variance
compounds multiplicatively through the stacked residual blocks and fusion
adds, and a freshly built full-size model emits values thousands of times
the unit data range; with them every block starts near identity and the
init output stays O(1).
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, add, concat, conv2d, leaky_relu, pixel_shuffle, relu

__all__ = [
    "Module", "ModuleList", "ConvLayer",
    "ResBlock", "DownBlock", "UpsampleBlock", "Srb", "Rfdb",
]


class Module:
    """Tree of parameters with deterministic, dotted-name traversal.

    Assigning a Tensor or Module attribute registers it; registration order
    (= assignment order) fixes the order of :meth:`named_params`, which the
    checkpoint format and the optimizer both rely on.
    """

    def __init__(self):
        object.__setattr__(self, "_params", [])
        object.__setattr__(self, "_children", [])

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params.append((name, value))
        elif isinstance(value, Module):
            self._children.append((name, value))
        object.__setattr__(self, name, value)

    def named_params(self, prefix: str = ""):
        """Yield (dotted_name, tensor) over the whole subtree, in order."""
        for name, t in self._params:
            yield prefix + name, t
        for name, child in self._children:
            yield from child.named_params(prefix + name + ".")

    def params(self):
        return [t for _, t in self.named_params()]

    def param_count(self) -> int:
        return sum(t.size for t in self.params())

    def zero_grad(self) -> None:
        for t in self.params():
            t.grad = None

    def forward(self, *args):
        raise NotImplementedError

    def __call__(self, *args):
        return self.forward(*args)


class ModuleList(Module):
    """Sequence of child modules registered under their index."""

    def __init__(self, modules):
        super().__init__()
        self._items = list(modules)
        for i, m in enumerate(self._items):
            self._children.append((str(i), m))

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


RELU_GAIN = math.sqrt(2.0)   # conv feeds a rectifier
LINEAR_GAIN = 1.0            # conv feeds anything non-rectified
RESIDUAL_GAIN = 0.1          # last conv of a residual branch: the block
                             # starts near identity but every path stays live


def _kaiming_weight(rng: np.random.Generator, cout: int, cin: int, kh: int, kw: int,
                    gain: float = RELU_GAIN) -> Tensor:
    std = gain / math.sqrt(cin * kh * kw)
    w = rng.standard_normal((cout, cin, kh, kw)) * std
    return Tensor(w.astype(np.float32), requires_grad=True)


class ConvLayer(Module):
    """One conv2d with its weight and bias."""

    def __init__(self, rng, cin: int, cout: int, k: int = 3, stride: int = 1,
                 padding=None, gain: float = RELU_GAIN):
        super().__init__()
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.weight = _kaiming_weight(rng, cout, cin, k, k, gain=gain)
        self.bias = Tensor.zeros((1, cout, 1, 1), requires_grad=True)

    def forward(self, x):
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    @staticmethod
    def analytic_param_count(cin: int, cout: int, k: int = 3) -> int:
        return cout * (cin * k * k + 1)


class ResBlock(Module):
    """x + conv3x3(relu(conv3x3(x))), channel-preserving."""

    def __init__(self, rng, channels: int):
        super().__init__()
        self.conv1 = ConvLayer(rng, channels, channels, k=3)
        self.conv2 = ConvLayer(rng, channels, channels, k=3, gain=RESIDUAL_GAIN)

    def forward(self, x):
        return add(x, self.conv2(relu(self.conv1(x))))

    @staticmethod
    def analytic_param_count(channels: int) -> int:
        return 2 * channels * (9 * channels + 1)


class DownBlock(Module):
    """Stride-2 3x3 conv + leaky relu; halves H and W exactly.

    Odd spatial dims are rejected rather than silently rounded, so a chain
    of these blocks stays invertible in shape.
    """

    SLOPE = 0.1

    def __init__(self, rng, cin: int, cout: int):
        super().__init__()
        self.conv = ConvLayer(rng, cin, cout, k=3, stride=2)

    def forward(self, x):
        _, _, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"downsampling needs even spatial dims; got {x.shape}")
        return leaky_relu(self.conv(x), self.SLOPE)

    @staticmethod
    def analytic_param_count(cin: int, cout: int) -> int:
        return cout * (9 * cin + 1)


class UpsampleBlock(Module):
    """3x3 conv to 4C channels, then a 2x pixel shuffle back to C."""

    def __init__(self, rng, channels: int):
        super().__init__()
        self.conv = ConvLayer(rng, channels, 4 * channels, k=3, gain=LINEAR_GAIN)

    def forward(self, x):
        return pixel_shuffle(self.conv(x), 2)

    @staticmethod
    def analytic_param_count(channels: int) -> int:
        return 4 * channels * (9 * channels + 1)


class Srb(Module):
    """Shallow residual block: leaky_relu(x + conv3x3(x)), slope 0.05."""

    SLOPE = 0.05

    def __init__(self, rng, channels: int):
        super().__init__()
        self.conv = ConvLayer(rng, channels, channels, k=3, gain=RESIDUAL_GAIN)

    def forward(self, x):
        return leaky_relu(add(x, self.conv(x)), self.SLOPE)

    @staticmethod
    def analytic_param_count(channels: int) -> int:
        return channels * (9 * channels + 1)


class Rfdb(Module):
    """Residual feature distillation block.

    Three stages each split the stream in two: a 1x1 conv distills half the
    channels off to the side (no activation) while an :class:`Srb` refines
    the full-width remainder. A fourth 1x1 distills the last refinement,
    the four half-width branches concatenate to 2C, a 1x1 fuses back to C,
    and the input is added on top.
    """

    def __init__(self, rng, channels: int):
        super().__init__()
        if channels % 2:
            raise ValueError(f"distillation halves the channels; {channels} is odd")
        half = channels // 2
        self.distill1 = ConvLayer(rng, channels, half, k=1, gain=LINEAR_GAIN)
        self.refine1 = Srb(rng, channels)
        self.distill2 = ConvLayer(rng, channels, half, k=1, gain=LINEAR_GAIN)
        self.refine2 = Srb(rng, channels)
        self.distill3 = ConvLayer(rng, channels, half, k=1, gain=LINEAR_GAIN)
        self.refine3 = Srb(rng, channels)
        self.distill4 = ConvLayer(rng, channels, half, k=1, gain=LINEAR_GAIN)
        self.fuse = ConvLayer(rng, 4 * half, channels, k=1, gain=RESIDUAL_GAIN)

    def forward(self, x):
        s1 = self.distill1(x)
        t1 = self.refine1(x)
        s2 = self.distill2(t1)
        t2 = self.refine2(t1)
        s3 = self.distill3(t2)
        t3 = self.refine3(t2)
        s4 = self.distill4(t3)
        merged = self.fuse(concat([s1, s2, s3, s4], axis=1))
        return add(x, merged)

    @staticmethod
    def analytic_param_count(channels: int) -> int:
        return 31 * channels * channels + 6 * channels
