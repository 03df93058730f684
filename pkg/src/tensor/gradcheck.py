"""Central finite-difference gradient checks for tape-differentiated functions."""
import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from src.config import FD_STEP
from src.tensor.core import Tape, Tensor

logger = logging.getLogger(__name__)


@dataclass
class GradMismatch:
    name: str
    index: tuple
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        return abs(self.analytic - self.numeric) / max(abs(self.analytic), abs(self.numeric), 1e-12)


def analytic_grads(fn: Callable[[], Tensor], tensors: Mapping[str, Tensor]) -> dict:
    for t in tensors.values():
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    return {
        name: (t.grad.copy() if t.grad is not None else np.zeros(t.shape, dtype=np.float64))
        for name, t in tensors.items()
    }


def numerical_grad(fn: Callable[[], Tensor], tensor: Tensor, index: tuple, h: float = FD_STEP) -> float:
    """(f(x+h) - f(x-h)) / 2h at one entry. Perturbs ``tensor.data`` and restores it."""
    original = tensor.data[index].copy()
    try:
        tensor.data[index] = original + h
        f_plus = fn().item()
        tensor.data[index] = original - h
        f_minus = fn().item()
    finally:
        tensor.data[index] = original
    return (f_plus - f_minus) / (2.0 * h)


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Mapping[str, Tensor],
    h: float = FD_STEP,
    rtol: float = 1e-3,
    atol: float = 1e-6,
    samples: Optional[int] = None,
    seed: int = 0,
) -> list[GradMismatch]:
    """Compare tape gradients of scalar ``fn()`` with central differences.

    ``samples`` limits the number of checked entries per tensor. Returns the
    entries where |analytic - numeric| > atol + rtol * max(|analytic|, |numeric|).
    """
    grads = analytic_grads(fn, tensors)
    rng = np.random.default_rng(seed)
    mismatches = []
    for name, tensor in tensors.items():
        flat = np.arange(tensor.size)
        if samples is not None and samples < tensor.size:
            flat = rng.choice(tensor.size, size=samples, replace=False)
        for k in flat:
            index = np.unravel_index(int(k), tensor.shape)
            analytic = float(grads[name][index])
            numeric = numerical_grad(fn, tensor, index, h)
            if abs(analytic - numeric) > atol + rtol * max(abs(analytic), abs(numeric)):
                mismatches.append(GradMismatch(name, index, analytic, numeric))
    if mismatches:
        worst = max(mismatches, key=lambda m: m.rel_error)
        logger.debug(f"{len(mismatches)} gradient mismatches, worst {worst}")
    return mismatches
