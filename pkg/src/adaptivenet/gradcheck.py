"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import GradientTape, Node, Param


class NonDeterministicClosureError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic, numeric, floor=1e-6):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    closure: Callable[[GradientTape | None], Node],
    params: list[Param],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients of ``closure`` with central differences.

    ``closure(tape)`` must rebuild the scalar loss from the current values in
    ``params``, recording onto ``tape`` when one is given.  When the model has
    more than ``max_coords`` coordinates a random subsample of that size is
    checked (drawn with ``seed``).  Relative errors use
    ``max(|analytic|, |numeric|, 1e-6)`` as denominator so vanishing
    gradients are compared absolutely.
    """
    first = float(closure(None).value)
    second = float(closure(None).value)
    if first != second:
        raise NonDeterministicClosureError(
            f"closure returned {first!r} then {second!r} for identical parameters"
        )

    for p in params:
        p.zero_grad()
    tape = GradientTape()
    loss = closure(tape)
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    coords = [(k, idx) for k, p in enumerate(params) for idx in np.ndindex(p.value.shape)]
    if max_coords is not None and len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in np.sort(pick)]

    worst, worst_name = 0.0, ""
    for k, idx in coords:
        p = params[k]
        orig = p.value[idx]
        p.value[idx] = orig + step
        up = float(closure(None).value)
        p.value[idx] = orig - step
        down = float(closure(None).value)
        p.value[idx] = orig
        numeric = (up - down) / (2.0 * step)
        err = relative_error(analytic[k][idx], numeric)
        if err > worst:
            worst, worst_name = err, f"{p.name}{list(idx)}"
    for p in params:
        p.zero_grad()
    return GradCheckReport(worst, len(coords), worst_name, tolerance)


def random_samples(rng: np.random.Generator, n: int, max_visits: int = 4, max_meds: int = 3):
    """Structured samples with random features in ``[0, 1)``, for gradient checks."""
    from .encoding import W_MED, W_PATIENT, W_VISIT
    from .sampling import StructuredSample

    out = []
    for _ in range(n):
        nv, nm = int(rng.integers(0, max_visits + 1)), int(rng.integers(0, max_meds + 1))
        out.append(
            StructuredSample(
                patient_id="",
                anchor_day=0,
                target_day=0,
                patient_vec=rng.random(W_PATIENT),
                visit_times=rng.integers(0, 400, nv),
                visit_features=rng.random((nv, W_VISIT)),
                med_times=rng.integers(0, 400, nm),
                med_features=rng.random((nm, W_MED)),
                delta_t=0.5,
                label=float(rng.normal()),
                current_score=3.0,
            )
        )
    return out


def check_model_gradients(
    seed: int,
    share_encoder: bool = True,
    dims: int = 6,
    n_samples: int = 3,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Finite-difference check of a small AdaptiveNet's full parameter gradient.

    Biases are drawn at random so ReLU units sit on both sides of their kink.
    """
    from .autodiff import mean_squared_error
    from .models import AdaptiveNet

    rng = np.random.default_rng(seed)
    net = AdaptiveNet(
        encoder_dim=dims, share_encoder=share_encoder, lstm_hidden=dims, rho_dim=dims, seed=seed
    )
    for p in net.params():
        if not p.regularize:
            p.value[...] = rng.normal(scale=0.1, size=p.value.shape)
    samples = random_samples(rng, n_samples)
    samples[0].visit_times = samples[0].visit_times[:0]
    samples[0].visit_features = samples[0].visit_features[:0]
    batch = net.make_batch(samples)

    def closure(tape):
        return mean_squared_error(net.forward(batch, tape), batch.labels, tape)

    return check_gradients(closure, net.params(), tolerance)
