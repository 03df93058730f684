"""Adam optimizer over named parameter tensors."""
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from src.config import ADAM_BETAS, ADAM_EPS
from src.errors import NonFiniteError
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter name, plus the step counter."""
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    eps: float = ADAM_EPS
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
    lr: float,
) -> AdamState:
    """Apply one bias-corrected Adam update in place.

    Parameters without a gradient are treated as having a zero gradient.
    The whole step is rejected before any buffer changes if a gradient
    holds NaN/Inf.
    """
    if lr <= 0:
        raise ValueError(f"Learning rate must be positive, got {lr}")

    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != param.shape:
            raise ValueError(f"Gradient for '{name}' has shape {grad.shape}, parameter has {param.shape}")
        if not np.all(np.isfinite(grad)):
            logger.error(f"Non-finite gradient for '{name}', Adam step {state.t + 1} rejected")
            raise NonFiniteError("adam_step", f"gradient of '{name}'")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t

    for name, param in params.items():
        grad = grads.get(name)
        g = np.zeros(param.shape, dtype=np.float64) if grad is None else grad.astype(np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(param.shape, dtype=np.float64)
            v = np.zeros(param.shape, dtype=np.float64)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v

        m_hat = m / correction1
        v_hat = v / correction2
        update = lr * m_hat / (np.sqrt(v_hat) + state.eps)
        param.data[...] = (param.data.astype(np.float64) - update).astype(param.data.dtype)

    return state


class Adam:
    """Stateful wrapper binding a parameter set to an AdamState."""

    def __init__(self, params: Mapping[str, Tensor], lr: float, state: Optional[AdamState] = None):
        self.params = dict(params)
        self.lr = lr
        self.state = state or AdamState()

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items()}
        adam_step(self.params, grads, self.state, self.lr)
