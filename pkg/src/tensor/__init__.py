"""Minimal tensor engine with reverse-mode differentiation and Adam."""
from src.tensor.core import Function, Tape, Tensor, as_tensor, backward, default_dtype, precision
from src.tensor.optim import Adam, AdamState, adam_step

__all__ = [
    "Adam",
    "AdamState",
    "Function",
    "Tape",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "default_dtype",
    "precision",
]
