"""Adagrad: each step is scaled by the root of the per-parameter sum of squared gradients."""
import logging
from typing import Dict, Mapping, Optional

import numpy as np

from kconc.errors import ContractError
from kconc.tensor import Tensor

logger = logging.getLogger(__name__)


class AdagradState:
    """Per-parameter sums of squared gradients. Accumulators only ever grow."""

    def __init__(self, learning_rate: float = 0.001, eps: float = 1e-8):
        if learning_rate < 0 or eps < 0:
            raise ContractError("learning rate and epsilon must be non-negative")
        self.learning_rate = learning_rate
        self.eps = eps
        self.accumulators: Dict[str, np.ndarray] = {}
        self.steps = 0


def adagrad_step(
    state: AdagradState, params: Mapping[str, Tensor], grads: Mapping[str, Optional[np.ndarray]]
) -> None:
    """acc += g^2; param -= lr * g / (sqrt(acc) + eps). Parameters are updated in place."""
    missing = sorted(set(params) - set(grads))
    if missing:
        raise ContractError(f"no gradients for parameters: {missing}")
    for name, param in params.items():
        grad = grads[name]
        if grad is None:
            grad = np.zeros_like(param.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != param.shape:
            raise ContractError(f"gradient for {name} has shape {grad.shape}, parameter {param.shape}")
        acc = state.accumulators.get(name)
        if acc is None:
            acc = np.zeros_like(param.data)
        acc = acc + grad * grad
        state.accumulators[name] = acc
        denom = np.sqrt(acc) + state.eps
        # zero accumulator with zero gradient (possible when eps == 0) means no update
        update = np.divide(grad, denom, out=np.zeros_like(grad), where=denom > 0)
        param.data -= state.learning_rate * update
    state.steps += 1


class Adagrad:
    """Adagrad over a fixed, named parameter set (usually ``model.trainable_parameters()``)."""

    def __init__(self, params: Mapping[str, Tensor], learning_rate: float = 0.001, eps: float = 1e-8):
        self.params = dict(params)
        self.state = AdagradState(learning_rate, eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        adagrad_step(self.state, self.params, {k: p.grad for k, p in self.params.items()})
