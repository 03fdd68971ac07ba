"""Finite-difference verification of tape gradients.

The checker seeds the backward pass with a fixed random upstream gradient R
and compares each analytic gradient against central differences of the
scalar probe  L(v) = sum(R * f(v)),  evaluated in float64 from float32
forward passes.

Piecewise-linear ops (relu, leaky_relu) break central differences when a
probe pair straddles their kink, so two guards apply:

* inputs are redrawn until every recorded preactivation clears a margin of
  10*eps — feasible for single ops and small blocks, and skipped (with
  ``margin_met=False``) for graphs with too many preactivations for
  rejection sampling to ever succeed;
* every probe pair is compared sign-for-sign on all preactivations, and a
  coordinate whose pair disagrees anywhere is excluded as non-smooth.

A coordinate counts as correct when analytic and numeric agree within an
absolute slack or a relative tolerance otherwise. The slack scales with the
largest gradient magnitude of its tensor: float32 probe noise is relative
to the graph's activation scale, so on a tensor whose gradients reach 400
a difference of 0.1 is noise, while on an O(1) tensor it is a bug.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tape, Tensor

__all__ = ["GradcheckReport", "gradcheck"]

_KINK_MARGIN_FACTOR = 10.0


@dataclass
class GradcheckReport:
    """Outcome of one gradcheck run; truthy when every input passed."""

    name: str
    eps: float
    tol: float
    atol: float
    resamples: int
    margin_met: bool
    entries: list = field(default_factory=list)  # (label, checked, skipped, max_rel_err)

    @property
    def max_rel_err(self) -> float:
        return max((e[3] for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        if any(checked == 0 for _, checked, _, _ in self.entries):
            return False
        return self.max_rel_err < self.tol

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        margin = "met" if self.margin_met else "per-coordinate guard only"
        lines = [f"gradcheck {self.name}: {status}  "
                 f"max_rel_err={self.max_rel_err:.3e} (tol={self.tol:.0e}, eps={self.eps:.0e}, "
                 f"resamples={self.resamples}, kink margin {margin})"]
        for label, checked, skipped, err in self.entries:
            note = f" skipped={skipped}" if skipped else ""
            lines.append(f"  {label:<24} coords={checked:<5d} max_rel_err={err:.3e}{note}")
        return "\n".join(lines)


def _default_refill(tensors, rng, scale):
    for t in tensors:
        t.data[...] = (rng.standard_normal(t.shape) * scale).astype(np.float32)


def _kink_signs(tape):
    return [rec.kink > 0 for rec in tape._records if rec.kink is not None]


def _same_signs(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradcheck(fn, wrt, *, eps: float = 1e-3, tol: float = 1e-2, atol: float = 2e-3,
              seed: int = 0, scale: float = 0.5, refill=None,
              max_coords: int | None = None, max_resamples: int = 200,
              labels=None, name: str = "fn") -> GradcheckReport:
    """Compare tape gradients of ``fn`` against central finite differences.

    Args:
        fn: zero-argument callable returning a Tensor; must read its inputs
            from the tensors in ``wrt`` (or tensors refreshed by ``refill``).
        wrt: leaf tensors whose gradients are checked. Their values are
            overwritten with fresh random draws before the run.
        eps: finite-difference step.
        tol: maximum allowed relative error.
        atol: base absolute slack; per tensor it is multiplied by
            max(1, largest |analytic gradient|), and coordinates whose
            analytic/numeric difference stays under it count as exact.
        scale: std-dev of the random refill values.
        refill: optional ``refill(rng)`` override that redraws input values;
            defaults to filling every ``wrt`` tensor with N(0, scale^2).
        max_coords: if set, check at most this many coordinates per tensor
            (a deterministic subsample) instead of every coordinate.
        max_resamples: redraw budget for clearing the kink margin before
            falling back to the per-coordinate guard alone.
        labels: names for the ``wrt`` tensors in the report.

    Returns:
        GradcheckReport; truthy iff every input had at least one smooth
        coordinate and all checked coordinates were within tolerance.
    """
    wrt = list(wrt)
    for t in wrt:
        if not t.requires_grad:
            raise ValueError("gradcheck inputs must have requires_grad=True")
    if labels is None:
        labels = [f"input[{i}]" for i in range(len(wrt))]
    rng = np.random.default_rng(seed)
    do_refill = refill if refill is not None else (lambda r: _default_refill(wrt, r, scale))

    margin = _KINK_MARGIN_FACTOR * eps
    resamples = 0
    margin_met = False
    while True:
        do_refill(rng)
        with Tape() as tape:
            out = fn()
        if tape.kink_margin() >= margin:
            margin_met = True
            break
        resamples += 1
        if resamples >= max_resamples:
            break

    upstream = rng.standard_normal(out.shape).astype(np.float32)
    proj = upstream.astype(np.float64).ravel()
    tape.backward_from(out, upstream)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in wrt]

    def probe():
        with Tape() as ptape:
            y = fn()
        val = float(proj @ y.data.astype(np.float64).ravel())
        return val, _kink_signs(ptape)

    report = GradcheckReport(name=name, eps=eps, tol=tol, atol=atol,
                             resamples=resamples, margin_met=margin_met)
    for t, a, label in zip(wrt, analytic, labels):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst = 0.0
        checked = 0
        skipped = 0
        a_flat = a.reshape(-1)
        slack = atol * max(1.0, float(np.abs(a_flat).max()))
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lo_hi, signs_hi = probe()
            flat[i] = orig - eps
            lo_lo, signs_lo = probe()
            flat[i] = orig
            if not _same_signs(signs_hi, signs_lo):
                skipped += 1  # probe pair straddles a kink: not locally smooth
                continue
            checked += 1
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            diff = abs(float(a_flat[i]) - numeric)
            if diff > slack:
                worst = max(worst, diff / max(abs(float(a_flat[i])), abs(numeric)))
        report.entries.append((label, checked, skipped, worst))
    return report
