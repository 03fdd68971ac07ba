"""Image quality metrics, 8-bit PNG I/O, and the evaluation report.

Images move through this module as (C,H,W) float32 arrays in [0,1] with
C of 1 or 3, matching the network's layout minus the batch axis.
"""

from __future__ import annotations

import math
import platform

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

__all__ = ["psnr", "ssim", "load_png", "save_png", "report", "PSNR_CAP"]

PSNR_CAP = 100.0
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[0] not in (1, 3):
        raise ValueError(f"expected (C,H,W) with 1 or 3 channels; got {a.shape}")


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for (near-)identical pairs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(data_range ** 2 / mse), PSNR_CAP)


def _ssim_window() -> np.ndarray:
    xs = np.arange(_WINDOW_SIZE, dtype=np.float64) - (_WINDOW_SIZE - 1) / 2.0
    g = np.exp(-(xs ** 2) / (2.0 * _WINDOW_SIGMA ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03,
         data_range: float = 1.0) -> float:
    """Mean local SSIM over valid 11x11 gaussian-weighted windows.

    Channels are scored independently and averaged. Images smaller than
    the window are rejected.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b)
    _, h, w = a.shape
    if h < _WINDOW_SIZE or w < _WINDOW_SIZE:
        raise ValueError(f"ssim needs at least {_WINDOW_SIZE}x{_WINDOW_SIZE} pixels; "
                         f"got {h}x{w}")
    win = _ssim_window()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    scores = []
    for c in range(a.shape[0]):
        pa = sliding_window_view(a[c], (_WINDOW_SIZE, _WINDOW_SIZE))
        pb = sliding_window_view(b[c], (_WINDOW_SIZE, _WINDOW_SIZE))
        axes = ([2, 3], [0, 1])
        mu_a = np.tensordot(pa, win, axes=axes)
        mu_b = np.tensordot(pb, win, axes=axes)
        var_a = np.tensordot(pa * pa, win, axes=axes) - mu_a ** 2
        var_b = np.tensordot(pb * pb, win, axes=axes) - mu_b ** 2
        cov = np.tensordot(pa * pb, win, axes=axes) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def load_png(path) -> np.ndarray:
    """Read an 8-bit PNG as (C,H,W) float32 in [0,1] (1 or 3 channels)."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "L":
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except (OSError, ValueError) as e:
        raise ValueError(f"cannot read image {path}: {e}") from None
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return np.clip(arr, 0.0, 1.0)


def save_png(path, image: np.ndarray) -> None:
    """Write (C,H,W) floats in [0,1] as an 8-bit PNG (round, clamp)."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (C,H,W) with 1 or 3 channels; got {arr.shape}")
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    if quantized.shape[0] == 1:
        Image.fromarray(quantized[0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(quantized.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def report(pairs, model=None, seconds_per_image: float | None = None) -> str:
    """Score (name, restored, reference) triples into a text table.

    Appends the mean row, the model's parameter count when given, and the
    measured per-image wall time with a hardware note. Timings from other
    machines (or devices) are not comparable and are never judged here.
    """
    rows = []
    for name, restored, reference in pairs:
        rows.append((str(name), psnr(restored, reference), ssim(restored, reference)))
    if not rows:
        raise ValueError("report needs at least one image pair")
    width = max(len(r[0]) for r in rows + [("mean",)])
    lines = [f"{'image':<{width}}  {'psnr_db':>8}  {'ssim':>7}"]
    for name, p, s in rows:
        lines.append(f"{name:<{width}}  {p:>8.3f}  {s:>7.4f}")
    mean_p = sum(r[1] for r in rows) / len(rows)
    mean_s = sum(r[2] for r in rows) / len(rows)
    lines.append(f"{'mean':<{width}}  {mean_p:>8.3f}  {mean_s:>7.4f}")
    if model is not None:
        lines.append(f"parameters: {model.param_count():,}")
    if seconds_per_image is not None:
        hw = platform.machine() or "unknown-cpu"
        lines.append(f"inference: {seconds_per_image:.3f}s/image on {hw} "
                     f"(CPU wall clock; not comparable across machines)")
    return "\n".join(lines)
