"""Minibatch Adam training on MSE plus an L1 weight penalty."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import GradientTape, mean_squared_error
from .optim import AdamState, adam_step, l1_penalty

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, step, batch_id, loss):
        self.step, self.batch_id, self.loss = step, batch_id, loss
        super().__init__(f"non-finite loss {loss!r} at step {step} (batch {batch_id})")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    steps: int = 7000
    learning_rate: float = 1e-4
    l1_coeff: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 1:
            raise ValueError("batch_size and steps must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.l1_coeff < 0:
            raise ValueError("l1_coeff must be >= 0")


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless shuffled epochs; yields ``(epoch, k, indices)``.

    A trailing partial batch is dropped unless the whole set is smaller
    than one batch.
    """
    epoch = 0
    while True:
        perm = rng.permutation(n)
        if n <= batch_size:
            yield epoch, 0, perm
        else:
            for k in range(n // batch_size):
                yield epoch, k, perm[k * batch_size : (k + 1) * batch_size]
        epoch += 1


def batch_loss(net, batch, labels, tape=None, training=False, rng=None):
    """MSE node of one batch; the L1 term is added separately."""
    return mean_squared_error(net.forward(batch, tape, training, rng), labels, tape)


def train(
    net,
    n_samples: int,
    get_batch: Callable[[np.ndarray], tuple[object, np.ndarray]],
    cfg: TrainConfig,
    callback: Callable[[int, float], None] | None = None,
) -> list[float]:
    """Run ``cfg.steps`` Adam updates of ``net`` and return the per-step loss.

    ``get_batch(indices)`` returns ``(batch, labels)`` for the network's
    ``forward``.  Minibatch order and dropout masks derive from ``cfg.seed``.
    """
    if n_samples < 1:
        raise ValueError("no training samples")
    params = net.params()
    state = AdamState(learning_rate=cfg.learning_rate)
    order_rng = np.random.default_rng([cfg.seed, 0])
    drop_rng = np.random.default_rng([cfg.seed, 1])
    trace = []
    batches = minibatches(n_samples, cfg.batch_size, order_rng)
    for step in range(cfg.steps):
        epoch, k, idx = next(batches)
        batch, labels = get_batch(idx)
        for p in params:
            p.zero_grad()
        tape = GradientTape()
        loss = batch_loss(net, batch, labels, tape, True, drop_rng)
        mse = float(loss.value)
        total = mse + l1_penalty(params, cfg.l1_coeff) if np.isfinite(mse) else mse
        if not np.isfinite(total):
            raise TrainingDivergedError(step, f"epoch {epoch} batch {k}", total)
        tape.backward(loss)
        adam_step(params, [p.grad for p in params], state)
        trace.append(total)
        if callback is not None:
            callback(step, total)
        if step % 500 == 0:
            log.debug("step %d loss %.5f", step, total)
    for p in params:
        p.zero_grad()
    return trace
