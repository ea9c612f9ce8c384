"""Adam, the step-decay learning-rate schedule and the training objective."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import config as C
from .errors import ShapeError, TrainingError
from .svdo import svdo_loss
from .tensor import Tensor


def lr_at(iteration: int, lr0: float = C.LR0, decay: float = C.LR_DECAY,
          interval: int = C.LR_DECAY_INTERVAL) -> float:
    """``lr0 * decay ** floor(iteration / interval)``.

    The product is formed exactly on the decimal values of ``lr0`` and
    ``decay`` (their shortest repr) and rounded once, so breakpoints land on
    the nearest double of the decimal result (1e-4 * 0.8**2 gives 6.4e-05,
    not 6.400000000000001e-05).
    """
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    steps = iteration // interval
    return float(Fraction(repr(float(lr0))) * Fraction(repr(float(decay))) ** steps)


@dataclass
class AdamState:
    beta1: float = C.ADAM_BETA1
    beta2: float = C.ADAM_BETA2
    eps: float = C.ADAM_EPS
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray | None], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place. Missing gradients count as zero."""
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name!r} at step {state.step + 1}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def loss_terms(pred: Tensor, target: Tensor, fdm_outputs, beta: float) -> tuple[Tensor, Tensor, Tensor]:
    """(total, l1, svdo) where total = l1 + beta * mean_phase(svdo)."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    l1 = (pred - target).abs().mean()
    if fdm_outputs:
        svdo = svdo_loss(fdm_outputs[0])
        for d in fdm_outputs[1:]:
            svdo = svdo + svdo_loss(d)
        svdo = svdo * (1.0 / len(fdm_outputs))
    else:
        svdo = Tensor(0.0)
    if beta == 0:
        return l1, l1, svdo
    return l1 + beta * svdo, l1, svdo


def total_loss(pred: Tensor, target: Tensor, fdm_outputs, beta: float = C.BETA) -> Tensor:
    return loss_terms(pred, target, fdm_outputs, beta)[0]
