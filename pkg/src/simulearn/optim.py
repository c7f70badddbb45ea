"""Parameter update rules.  Pure functions: inputs are never mutated."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .model import ParameterStore


def _check_grads(params: ParameterStore, grads: dict[str, np.ndarray]):
    for name, arr in params.arrays.items():
        g = grads.get(name)
        if g is None or g.shape != arr.shape:
            got = None if g is None else g.shape
            raise ShapeError(f"gradient for {name}: expected {arr.shape}, got {got}")


def sgd_step(
    params: ParameterStore, grads: dict[str, np.ndarray], learning_rate: float
) -> ParameterStore:
    """Plain gradient descent: theta' = theta - eta * g."""
    _check_grads(params, grads)
    arrays = {
        name: arr - learning_rate * grads[name] for name, arr in params.arrays.items()
    }
    return ParameterStore(arrays, params.input_shape)


@dataclass
class AdaGradState:
    """Per-parameter squared-gradient accumulators plus a step counter."""

    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: ParameterStore) -> "AdaGradState":
        return cls({name: np.zeros_like(a) for name, a in params.arrays.items()}, 0)


def adagrad_step(
    params: ParameterStore,
    grads: dict[str, np.ndarray],
    state: AdaGradState,
    learning_rate: float,
    eps: float = 1e-8,
) -> tuple[ParameterStore, AdaGradState]:
    """Accumulate G += g^2 and step by eta * g / sqrt(G + eps)."""
    _check_grads(params, grads)
    arrays = {}
    accum = {}
    for name, arr in params.arrays.items():
        g = grads[name]
        acc = state.accumulators[name] + g * g
        accum[name] = acc
        arrays[name] = arr - learning_rate * g / np.sqrt(acc + eps)
    return ParameterStore(arrays, params.input_shape), AdaGradState(accum, state.step + 1)
