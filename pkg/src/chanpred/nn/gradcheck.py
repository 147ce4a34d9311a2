"""Finite-difference verification of tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import ContractError, Tensor, backward, no_grad

STEP = 1e-5


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], probes: int = 40,
               seed: int = 0, step: float = STEP) -> float:
    """Worst relative error between tape and central-difference gradients.

    ``loss_fn`` must rebuild the scalar loss from the current parameter
    values. ``probes`` coordinates are sampled across all parameters,
    weighted by size but with at least one probe per tensor.
    """
    if any(p.data.dtype != np.float64 for p in params):
        raise ContractError("grad_check requires float64 parameters")
    analytic = backward(loss_fn(), params)
    rng = np.random.default_rng(seed)

    sizes = np.array([p.data.size for p in params], dtype=float)
    picks = list(range(len(params)))
    if probes > len(params):
        picks += list(rng.choice(len(params), size=probes - len(params), p=sizes / sizes.sum()))

    worst = 0.0
    for k in picks:
        p = params[k]
        flat = p.data.reshape(-1)
        i = int(rng.integers(flat.size))
        orig = flat[i]
        with no_grad():
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
        flat[i] = orig
        numeric = (up - down) / (2.0 * step)
        worst = max(worst, relative_error(float(analytic[p].reshape(-1)[i]), numeric))
    return worst
