"""Gradient extraction and finite-difference verification.

Loss functions here take a mapping from parameter name to traced Node and
return a scalar Node. `value_and_grad` runs the tape once; `finite_diff_check`
compares the tape's gradient against central differences on a random subset
of coordinates, which is the package's ground truth for every training loss.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .params import ParamSet
from ..errors import NumericError

LossFn = Callable[[Mapping[str, ad.Node]], ad.Node]


def value_and_grad(loss_fn: LossFn, params: ParamSet) -> tuple[float, ParamSet]:
    """Evaluate a loss and its gradient with respect to every parameter."""
    nodes = {name: ad.Node(arr) for name, arr in params.items()}
    loss = loss_fn(nodes)
    val = float(loss.value)
    if not np.isfinite(val):
        raise NumericError(f"loss evaluated to a non-finite value: {val}")
    ad.backward(loss)
    grads = ParamSet()
    for name, node in nodes.items():
        grads[name] = node.grad if node.grad is not None else np.zeros_like(node.value)
    return val, grads


def grad(loss_fn: LossFn, params: ParamSet) -> ParamSet:
    return value_and_grad(loss_fn, params)[1]


def finite_diff_check(
    loss_fn: LossFn,
    params: ParamSet,
    rng: np.random.Generator,
    step: float = 1e-5,
    max_coords: int = 50,
) -> float:
    """Max relative error between tape and central-difference gradients.

    Samples up to `max_coords` coordinates across all parameters. The
    relative error for a coordinate is |ad - fd| / max(|ad|, |fd|, 1e-6).
    """
    _, grads = value_and_grad(loss_fn, params)
    return fd_error(loss_fn, params, grads, rng, step=step, max_coords=max_coords)


def fd_error(
    loss_fn: LossFn,
    params: ParamSet,
    grads: ParamSet,
    rng: np.random.Generator,
    step: float = 1e-5,
    max_coords: int = 50,
) -> float:
    """Compare externally supplied gradients against central differences."""
    coords = []
    for name, arr in params.items():
        for flat_idx in range(arr.size):
            coords.append((name, flat_idx))
    if len(coords) > max_coords:
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in pick]
    worst = 0.0
    for name, flat_idx in coords:
        perturbed = params.copy()
        flat = perturbed[name].reshape(-1)
        orig = flat[flat_idx]
        flat[flat_idx] = orig + step
        f_plus = float(loss_fn({n: ad.Node(a) for n, a in perturbed.items()}).value)
        flat[flat_idx] = orig - step
        f_minus = float(loss_fn({n: ad.Node(a) for n, a in perturbed.items()}).value)
        flat[flat_idx] = orig
        fd = (f_plus - f_minus) / (2.0 * step)
        adg = float(grads[name].reshape(-1)[flat_idx])
        err = abs(adg - fd) / max(abs(adg), abs(fd), 1e-6)
        worst = max(worst, err)
    return worst
