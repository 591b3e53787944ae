"""Sigmoid cross-entropy for teachers and students, plus the normalization-gradient diagnostics."""
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from kconc.errors import ContractError, DegenerateInputError, SpecValidationError
from kconc.tensor import NORM_EPSILON, Function, Tensor, as_tensor


class LossBatch(BaseModel):
    """Logits ``x`` and targets ``t`` (hard labels or soft targets), both N_b x N_c."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    logits: Tensor
    targets: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def coerce(cls, values):
        if isinstance(values, dict):
            values = dict(values)
            values["logits"] = as_tensor(values.get("logits"))
            values["targets"] = np.asarray(values.get("targets"), dtype=np.float64)
        return values

    @model_validator(mode="after")
    def check_targets(self):
        if self.logits.shape != self.targets.shape or self.logits.ndim != 2:
            raise SpecValidationError(
                f"logits {self.logits.shape} and targets {self.targets.shape} must be equal 2-D shapes"
            )
        if self.targets.size and (self.targets.min() < 0.0 or self.targets.max() > 1.0):
            raise SpecValidationError("targets must lie within [0, 1]")
        return self


class SigmoidCrossEntropy(Function):
    """Batch mean, class sum: -(1/N_b) sum_i sum_j [t log s(x) + (1 - t) log(1 - s(x))]."""

    op = "sigmoid_ce"

    def forward(self, x, targets: np.ndarray):
        self.x, self.targets = x, targets
        # -log s(x) = softplus(-x); the pair collapses to softplus(x) - t x
        per_entry = np.logaddexp(0.0, x) - targets * x
        return np.asarray(per_entry.sum() / x.shape[0])

    def backward(self, grad):
        probs = np.exp(-np.logaddexp(0.0, -self.x))
        return (grad * (probs - self.targets) / self.x.shape[0],)


def sigmoid_ce_loss(batch: LossBatch) -> Tensor:
    return SigmoidCrossEntropy.apply(batch.logits, targets=batch.targets)


def sigmoid_ce(logits: Tensor, targets) -> Tensor:
    return sigmoid_ce_loss(LossBatch(logits=logits, targets=targets))


def diagonal_normalization_gradient(x, gamma: float, upstream) -> np.ndarray:
    """Diagonal-only gradient of ``gamma * x / ||x||`` w.r.t. each ``x_i``.

    ``gamma * upstream_i * (1/||x|| - x_i^2 / ||x||^3)``. Cross terms of the full
    Jacobian are omitted; the exact gradient comes from autodiff.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.shape != upstream.shape or x.ndim != 1:
        raise ContractError(f"x {x.shape} and upstream {upstream.shape} must be equal 1-D shapes")
    norm = np.sqrt(np.sum(x * x))
    if norm <= NORM_EPSILON:
        raise DegenerateInputError(f"vector norm {norm} <= {NORM_EPSILON}")
    return gamma * upstream * (1.0 / norm - x * x / norm**3)


eq5_diagonal_gradient = diagonal_normalization_gradient


def grad_ratio_estimate(n_v: int) -> float:
    """Initial gamma mean for a vertical of ``n_v`` classes: sqrt(n_v)."""
    if n_v < 1:
        raise ContractError(f"vertical size must be >= 1, got {n_v}")
    return math.sqrt(n_v)


def normalization_gradient_ratio(n_v: int, draws: int = 1000, seed: Optional[int] = 0) -> float:
    """Monte-Carlo mean of d x_hat_j / d x_j over standard-normal ``n_v``-vectors.

    Shrinks like 1/sqrt(n_v), which is why gamma starts at sqrt(n_v).
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((draws, n_v))
    sq_norm = np.sum(x * x, axis=1, keepdims=True)
    ratios = (1.0 / np.sqrt(sq_norm)) * (1.0 - x * x / sq_norm)
    return float(ratios.mean())
