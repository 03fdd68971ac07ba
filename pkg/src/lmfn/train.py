"""Deterministic patch-based training on synthetic blur pairs.

Every random choice of iteration ``it`` comes from an rng keyed by
``(seed, it)`` and every blur jitter from ``(blur.seed, sample index)``, so
a run is reproducible bit-for-bit regardless of how batches are prefetched.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .blur import BlurSpec, spec_for_sample, synthesize_pair
from .checkpoint import save_checkpoint
from .model import LmfnModel
from .optim import Adam, lr_schedule
from .tensor import Tape, Tensor, backward

__all__ = ["TrainResult", "train"]


@dataclass
class TrainResult:
    """Loss trace plus where the checkpoints went."""

    trace: list = field(default_factory=list)  # (iteration, loss, lr)
    best_step: int = -1
    best_loss: float = float("inf")
    final_loss: float = float("nan")
    best_path: str | None = None
    final_path: str | None = None
    trace_path: str | None = None


def _validate_dataset(images, patch: int):
    if not images:
        raise ValueError("training needs at least one sharp image")
    for i, img in enumerate(images):
        arr = np.asarray(img)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"image {i} must be (3,H,W); got {arr.shape}")
        if arr.shape[1] < patch or arr.shape[2] < patch:
            raise ValueError(f"image {i} is {arr.shape[1]}x{arr.shape[2]}, smaller "
                             f"than the {patch}x{patch} training patch")


def _batch(images, blur: BlurSpec, jitter: bool, patch: int, batch_size: int,
           seed: int, it: int):
    rng = np.random.default_rng((seed, it))
    replace = len(images) < batch_size
    picks = rng.choice(len(images), size=batch_size, replace=replace)
    blurred, sharp = [], []
    for j, pick in enumerate(picks):
        img = images[pick]
        y0 = int(rng.integers(0, img.shape[1] - patch + 1))
        x0 = int(rng.integers(0, img.shape[2] - patch + 1))
        crop = img[:, y0:y0 + patch, x0:x0 + patch]
        spec = spec_for_sample(blur, it * batch_size + j) if jitter else blur
        b, s = synthesize_pair(crop, spec)
        blurred.append(b)
        sharp.append(s)
    return Tensor(np.stack(blurred)), Tensor(np.stack(sharp))


def train(model: LmfnModel, images, steps: int, *, blur: BlurSpec | None = None,
          jitter: bool = True, batch_size: int = 4, patch_size: int = 64,
          seed: int = 0, base_lr: float = 1e-4, weight_decay: float = 1e-4,
          log_every: int = 50, out_dir: str | None = None) -> TrainResult:
    """Run ``steps`` Adam updates of ``model`` on random blurred patches.

    ``images`` is a sequence of (3,H,W) float32 arrays in [0,1]. When
    ``out_dir`` is given, writes ``best.ckpt`` (lowest-loss weights),
    ``final.ckpt`` (last weights + optimizer state), and ``trace.csv``
    (iteration,loss,lr). A non-finite loss aborts with the offending step.
    """
    blur = blur or BlurSpec()
    blur.validate()
    _validate_dataset(images, patch_size)
    div = 1 << model.config.num_scales
    if patch_size % div:
        raise ValueError(f"patch_size must be a multiple of {div} for "
                         f"{model.config.num_scales} scales; got {patch_size}")
    images = [np.asarray(img, dtype=np.float32) for img in images]

    opt = Adam(model.params(), lr=base_lr, weight_decay=weight_decay)
    result = TrainResult()
    best_state = {name: t.data.copy() for name, t in model.named_params()}
    result.best_step = 0

    for it in range(steps):
        blurred, sharp = _batch(images, blur, jitter, patch_size, batch_size, seed, it)
        opt.zero_grad()
        with Tape() as tape:
            loss = model.loss(blurred, sharp)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise RuntimeError(f"loss became non-finite ({loss_val}) at step {it}; "
                               f"stopping before parameters are poisoned")
        backward(loss, tape)
        opt.step(lr=lr_schedule(it, base_lr))

        if loss_val < result.best_loss:
            result.best_loss = loss_val
            result.best_step = it
            for name, t in model.named_params():
                best_state[name][...] = t.data
        if it % log_every == 0 or it == steps - 1:
            result.trace.append((it, loss_val, lr_schedule(it, base_lr)))
        result.final_loss = loss_val

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        result.final_path = os.path.join(out_dir, "final.ckpt")
        save_checkpoint(result.final_path, model, optimizer=opt)

        live = {name: t.data.copy() for name, t in model.named_params()}
        for name, t in model.named_params():
            t.data[...] = best_state[name]
        result.best_path = os.path.join(out_dir, "best.ckpt")
        save_checkpoint(result.best_path, model)
        for name, t in model.named_params():
            t.data[...] = live[name]

        result.trace_path = os.path.join(out_dir, "trace.csv")
        with open(result.trace_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "loss", "lr"])
            for row in result.trace:
                writer.writerow([row[0], f"{row[1]:.8f}", f"{row[2]:.2e}"])
    return result
