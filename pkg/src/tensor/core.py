"""Dense tensors with tape-based reverse-mode differentiation."""
from __future__ import annotations

import contextvars
import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Iterator, Optional, Sequence

import numpy as np

from src.errors import NonFiniteError

logger = logging.getLogger(__name__)

_DTYPE: contextvars.ContextVar[type] = contextvars.ContextVar("cpga_dtype", default=np.float32)
_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar("cpga_tape", default=None)


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Create and compute tensors in ``dtype`` inside the block (float32 outside)."""
    token = _DTYPE.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DTYPE.reset(token)


def default_dtype() -> type:
    return _DTYPE.get()


class Tensor:
    """N-dimensional float array with an optional gradient buffer.

    Scalars are stored with shape ``(1,)``. ``data`` is never mutated by ops;
    only the optimizer writes parameter buffers in place.
    """

    __slots__ = ("data", "requires_grad", "grad", "is_leaf", "name")

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=default_dtype(), copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.size == 0:
            raise ValueError(f"Tensor must have positive dimensions, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.is_leaf = True
        self.name = name

    @classmethod
    def wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Adopt ``arr`` without copying (internal use by ops)."""
        out = cls.__new__(cls)
        out.data = arr if arr.ndim else arr.reshape(1)
        out.requires_grad = requires_grad
        out.grad = None
        out.is_leaf = True
        out.name = None
        return out

    # ── Introspection ───────────────────────────────────────────────

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor.wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # ── Operators (delegate to src.tensor.ops) ──────────────────────

    def __add__(self, other):
        from src.tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from src.tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from src.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.tensor import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from src.tensor import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from src.tensor import ops
        return ops.div(other, self)

    def __pow__(self, other):
        from src.tensor import ops
        return ops.pow(self, other)

    def __neg__(self):
        from src.tensor import ops
        return ops.neg(self)


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Function:
    """A differentiable op: ``forward`` on arrays, ``backward`` returns input grads."""

    name = "op"

    def __init__(self):
        self.saved: tuple = ()

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        fn = cls()
        out_data = fn.forward(*(t.data for t in inputs), **kwargs)
        out_data = np.asarray(out_data, dtype=default_dtype())
        if not np.all(np.isfinite(out_data)):
            raise NonFiniteError(fn.name, f"output shape {out_data.shape}")

        requires_grad = any(t.requires_grad for t in inputs)
        out = Tensor.wrap(out_data, requires_grad=requires_grad)
        tape = _ACTIVE_TAPE.get()
        if requires_grad and tape is not None:
            out.is_leaf = False
            tape.record(fn, inputs, out)
        return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of scalar/singleton broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


@dataclass
class TapeEntry:
    fn: Function
    inputs: tuple[Tensor, ...]
    output: Tensor


class Tape:
    """Ordered record of executed differentiable ops.

    Recording order is execution order, which is a topological order of the
    graph; ``backward`` walks it once in reverse.
    """

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, fn: Function, inputs: tuple[Tensor, ...], output: Tensor) -> None:
        self.entries.append(TapeEntry(fn, tuple(inputs), output))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every requires_grad leaf's ``grad``."""
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            logger.debug("backward called on a loss with no differentiable ancestry")
            return

        seed = np.ones_like(loss.data)
        if loss.is_leaf:
            _accumulate(loss, seed)
            return

        pending: dict[int, np.ndarray] = {id(loss): seed}
        for entry in reversed(self.entries):
            grad = pending.pop(id(entry.output), None)
            if grad is None:
                continue
            input_grads = entry.fn.backward(grad)
            for tensor, g in zip(entry.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                if g.shape != tensor.shape:
                    g = unbroadcast(g, tensor.shape)
                if tensor.is_leaf:
                    _accumulate(tensor, g)
                elif id(tensor) in pending:
                    pending[id(tensor)] = pending[id(tensor)] + g
                else:
                    pending[id(tensor)] = g


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    grad = np.asarray(grad, dtype=tensor.data.dtype)
    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate gradients on all requires_grad leaves reached from ``loss``.

    Repeated calls without resetting ``grad`` accumulate; the trainer zeroes
    gradients before each step.
    """
    tape.backward(loss)
