"""Adam and exponential moving averages over ParamSet collections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet


@dataclass
class OptState:
    """Adam accumulator state; one (m, v) pair per parameter name."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamSet, grads: ParamSet, opt: OptState) -> ParamSet:
    """One Adam update; mutates `opt` in place and returns new parameters."""
    opt.step += 1
    t = opt.step
    out = ParamSet()
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        m = opt.m.get(name)
        v = opt.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g
        opt.m[name] = m
        opt.v[name] = v
        m_hat = m / (1.0 - opt.beta1**t)
        v_hat = v / (1.0 - opt.beta2**t)
        out[name] = p - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return out


def ema_update(target: ParamSet, source: ParamSet, momentum: float) -> ParamSet:
    """target <- momentum * target + (1 - momentum) * source, per array."""
    out = ParamSet()
    for name, t in target.items():
        out[name] = momentum * t + (1.0 - momentum) * source[name]
    return out
