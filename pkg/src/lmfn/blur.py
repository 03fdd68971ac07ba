"""Synthetic blur: kernel construction and sharp/blurred pair synthesis.

Stands in for captured blur data at desk scale. Kernels are normalized,
nonnegative, and point-symmetric, so correlation and convolution agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["BlurSpec", "make_blur_kernel", "synthesize_pair",
           "spec_for_sample", "synthetic_sharp_patch"]

KINDS = ("gaussian", "linear-motion")


@dataclass(frozen=True)
class BlurSpec:
    """Parameters of one blur kernel.

    gaussian uses ``sigma``; linear-motion uses ``length`` (odd, >= 3) and
    ``angle`` in degrees within [0, 180). ``seed`` keys the per-sample
    jitter stream in :func:`spec_for_sample`, not the kernel itself.
    """

    kind: str = "gaussian"
    sigma: float = 1.5
    length: int = 9
    angle: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"blur kind must be one of {KINDS}; got {self.kind!r}")
        if self.kind == "gaussian":
            if not (self.sigma > 0):
                raise ValueError(f"gaussian sigma must be > 0; got {self.sigma}")
        else:
            if self.length < 3 or self.length % 2 == 0:
                raise ValueError(f"motion length must be an odd int >= 3; got {self.length}")
            if not (0.0 <= self.angle < 180.0):
                raise ValueError(f"motion angle must lie in [0, 180); got {self.angle}")


def make_blur_kernel(spec: BlurSpec) -> np.ndarray:
    """Normalized 2-D kernel (float64) realizing one :class:`BlurSpec`."""
    spec.validate()
    if spec.kind == "gaussian":
        radius = max(1, math.ceil(3.0 * spec.sigma))
        offsets = np.arange(-radius, radius + 1, dtype=np.float64)
        density = np.exp(-(offsets ** 2) / (2.0 * spec.sigma ** 2))
        kernel = np.outer(density, density)
    else:
        # length unit-spaced samples along the segment, 1/length mass each,
        # nearest-cell rasterization, then the zero border is trimmed
        half = (spec.length - 1) / 2.0
        t = np.arange(spec.length, dtype=np.float64) - half
        theta = math.radians(spec.angle)
        rows = np.rint(t * math.sin(theta)).astype(int)
        cols = np.rint(t * math.cos(theta)).astype(int)
        extent = spec.length
        grid = np.zeros((2 * extent + 1, 2 * extent + 1), dtype=np.float64)
        for r, c in zip(rows, cols):
            grid[extent + r, extent + c] += 1.0 / spec.length
        used_r = np.where(grid.any(axis=1))[0]
        used_c = np.where(grid.any(axis=0))[0]
        kernel = grid[used_r[0]:used_r[-1] + 1, used_c[0]:used_c[-1] + 1]
    return kernel / kernel.sum()


def _correlate_reflect(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    h, w = plane.shape
    if ph >= h or pw >= w:
        raise ValueError(f"kernel {kernel.shape} too large for a {h}x{w} image")
    padded = np.pad(plane, ((ph, ph), (pw, pw)), mode="reflect")
    win = sliding_window_view(padded, (kh, kw))
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def synthesize_pair(sharp: np.ndarray, spec: BlurSpec):
    """(blurred, sharp) from one sharp image laid out (C, H, W) in [0, 1].

    Blur is channel-wise cross-correlation with reflect padding; outputs
    are clamped back to [0, 1] and float32.
    """
    sharp = np.asarray(sharp, dtype=np.float32)
    if sharp.ndim != 3:
        raise ValueError(f"expected a (C,H,W) image; got shape {sharp.shape}")
    kernel = make_blur_kernel(spec)
    blurred = np.stack([_correlate_reflect(sharp[c].astype(np.float64), kernel)
                        for c in range(sharp.shape[0])])
    return np.clip(blurred, 0.0, 1.0).astype(np.float32), sharp


def spec_for_sample(spec: BlurSpec, index: int) -> BlurSpec:
    """Deterministic per-sample jitter of a base spec, keyed by (seed, index)."""
    rng = np.random.default_rng((spec.seed, index))
    if spec.kind == "gaussian":
        return replace(spec, sigma=spec.sigma * float(rng.uniform(0.8, 1.25)))
    return replace(spec, angle=float(rng.uniform(0.0, 180.0)))


def synthetic_sharp_patch(seed: int, size: int = 64, channels: int = 3) -> np.ndarray:
    """Random test card in [0, 1]: smooth sinusoid mixture plus hard-edged
    rectangles, so a deblurrer has both low- and high-frequency structure
    to recover. (C, size, size) float32."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    img = np.zeros((channels, size, size), dtype=np.float64)
    for c in range(channels):
        acc = np.zeros((size, size))
        for _ in range(4):
            fy, fx = rng.uniform(1.0, 4.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            acc += rng.uniform(0.3, 1.0) * np.sin(2.0 * np.pi * (fx * xx + fy * yy) + phase)
        img[c] = acc
    for _ in range(4):
        y0 = int(rng.integers(0, size - 8))
        x0 = int(rng.integers(0, size - 8))
        hgt = int(rng.integers(4, max(5, size // 4)))
        wdt = int(rng.integers(4, max(5, size // 4)))
        img[:, y0:y0 + hgt, x0:x0 + wdt] += rng.uniform(-1.0, 1.0)
    img -= img.min()
    img /= max(img.max(), 1e-9)
    return img.astype(np.float32)
