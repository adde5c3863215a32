"""Adam optimizer and L1 weight penalty."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Param


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("learning_rate", "beta1", "beta2", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def adam_step(params: list[Param], grads: list[np.ndarray], state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update in place and return ``state``."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.value) for p in params]
        state.second_moment = [np.zeros_like(p.value) for p in params]
    for p, g, m in zip(params, grads, state.first_moment):
        if g.shape != p.value.shape or m.shape != p.value.shape:
            raise ValueError(f"shape mismatch for {p.name}: {p.value.shape} vs {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter block {p.name!r}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state


def l1_penalty(params: list[Param], coefficient: float) -> float:
    """Return ``coefficient * sum|w|`` over weight blocks and add its subgradient.

    Bias blocks (``regularize=False``) are skipped.  ``sign(0) == 0``.
    """
    if coefficient < 0:
        raise ValueError("L1 coefficient must be >= 0")
    if coefficient == 0:
        return 0.0
    total = 0.0
    for p in params:
        if not p.regularize:
            continue
        total += np.abs(p.value).sum()
        p.accumulate(coefficient * np.sign(p.value))
    return coefficient * total
