"""Finite-difference validation of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NonFiniteLossError
from .tensor import Tensor


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    coords_per_param: int = 20,
    rng: np.random.Generator | None = None,
    signal_floor: float = 1e-7,
) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    f re-evaluates the scalar loss from the current parameter values each
    time it is called.  For each parameter, up to coords_per_param
    coordinates are sampled and perturbed in place by ±eps.  The error at
    a coordinate is |g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-8).  Requires
    64-bit parameters; raises NonFiniteLossError if the loss is not
    finite.

    Coordinates where BOTH estimates fall below signal_floor are skipped:
    central differences bottom out at ~|f|*ulp/eps (≈1e-10 here), so for
    a direction the loss provably ignores (e.g. an output offset a
    mean-invariant objective cancels) the quotient would only compare
    rounding noise against the 1e-8 denominator floor.  A wrong
    reverse-mode gradient cannot hide this way, since it would need the
    finite-difference estimate to be quiet too.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteLossError("loss is not finite at the evaluation point")
    out.backward()
    analytic = [
        np.array(p.grad) if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        g_flat = g.reshape(-1)
        k = min(coords_per_param, flat.size)
        picks = rng.choice(flat.size, size=k, replace=False)
        for idx in picks:
            saved = flat[idx]
            flat[idx] = saved + eps
            f_plus = float(f().data)
            flat[idx] = saved - eps
            f_minus = float(f().data)
            flat[idx] = saved
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteLossError("loss is not finite under perturbation")
            fd = (f_plus - f_minus) / (2.0 * eps)
            ad = g_flat[idx]
            if max(abs(ad), abs(fd)) < signal_floor:
                continue
            err = abs(ad - fd) / max(abs(ad), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst
