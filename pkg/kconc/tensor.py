"""Dense float64 tensors with a reverse-mode gradient tape.

Every differentiable op is a :class:`Function` subclass. Applying one records the
function (the tape node) on the output tensor; :func:`backward` walks the recorded
DAG in reverse topological order and accumulates gradients into the leaves.
"""
import logging
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from kconc.errors import ContractError, DegenerateInputError, DimensionError

logger = logging.getLogger(__name__)

# Segments whose L2 norm is at or below this are rejected by the normalize ops.
NORM_EPSILON = 1e-12

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]
Segment = Union[Tuple[int, int], range]


class Function:
    """Base class for differentiable operations (one node of the tape)."""

    op = "function"

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        """Return dL/d(input) for every input, given dL/d(output)."""
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs) -> "Tensor":
        inputs = tuple(as_tensor(t) for t in inputs)
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, creator=fn if requires_grad else None)

    def __repr__(self) -> str:
        return f"<{self.op} node, {len(self.inputs)} inputs>"


class Tensor:
    """A float64 array plus an optional tape reference.

    Only leaves (tensors created directly with ``requires_grad=True``) ever receive
    a ``grad``. Gradients accumulate across :func:`backward` calls until
    :meth:`zero_grad` is called.
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
    ):
        if creator is None:
            self.data = np.array(data, dtype=np.float64)
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.creator = creator
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def sum(self) -> "Tensor":
        return Sum.apply(self)

    def __add__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self, Neg.apply(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(other, Neg.apply(self))

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(other, self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise -------------------------------------------------------------


class Add(Function):
    op = "add"

    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Neg(Function):
    op = "neg"

    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Mul(Function):
    op = "mul"

    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return unbroadcast(grad * self.b, self.a.shape), unbroadcast(grad * self.a, self.b.shape)


class Sigmoid(Function):
    op = "sigmoid"

    def forward(self, x):
        # exp(-log(1 + exp(-x))) never overflows and stays in [0, 1]
        self.out = np.exp(-np.logaddexp(0.0, -x))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Sum(Function):
    op = "sum"

    def forward(self, x):
        self.in_shape = x.shape
        return np.asarray(x.sum())

    def backward(self, grad):
        return (np.broadcast_to(grad, self.in_shape).copy(),)


# -- linear algebra and indexing --------------------------------------------


class MatMul(Function):
    op = "matmul"

    def forward(self, a, b):
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class Concat(Function):
    op = "concat"

    def forward(self, *arrays):
        self.widths = [a.shape[-1] for a in arrays]
        return np.concatenate(arrays, axis=-1)

    def backward(self, grad):
        bounds = np.cumsum([0] + self.widths)
        return tuple(grad[..., lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))


class SliceColumns(Function):
    op = "slice"

    def forward(self, x, start: int, stop: int):
        self.in_shape = x.shape
        self.start, self.stop = start, stop
        return x[..., start:stop]

    def backward(self, grad):
        full = np.zeros(self.in_shape)
        full[..., self.start:self.stop] = grad
        return (full,)


class Take(Function):
    """Gather along the last axis; repeated indices accumulate in backward."""

    op = "take"

    def forward(self, x, indices: np.ndarray):
        self.in_shape = x.shape
        self.indices = indices
        return x[..., indices]

    def backward(self, grad):
        moved = np.zeros((self.in_shape[-1],) + self.in_shape[:-1])
        np.add.at(moved, self.indices, np.moveaxis(grad, -1, 0))
        return (np.moveaxis(moved, 0, -1),)


class SegmentNormalize(Function):
    """Per-row L2 normalization of disjoint column ranges.

    Backward uses the full Jacobian of ``x / ||x||`` inside each segment:
    ``dL/dx = g / ||x|| - x (x . g) / ||x||^3``.
    """

    op = "l2_normalize_segment"

    def forward(self, x, segments: List[Tuple[int, int]]):
        self.x = x
        self.segments = segments
        self.norms = []
        out = x.copy()
        for lo, hi in segments:
            seg = x[..., lo:hi]
            norm = np.sqrt(np.sum(seg * seg, axis=-1, keepdims=True))
            if np.any(norm <= NORM_EPSILON):
                raise DegenerateInputError(
                    f"segment [{lo}, {hi}) has L2 norm <= {NORM_EPSILON}; cannot normalize"
                )
            out[..., lo:hi] = seg / norm
            self.norms.append(norm)
        return out

    def backward(self, grad):
        gx = grad.copy()
        for (lo, hi), norm in zip(self.segments, self.norms):
            xs = self.x[..., lo:hi]
            gs = grad[..., lo:hi]
            dot = np.sum(xs * gs, axis=-1, keepdims=True)
            gx[..., lo:hi] = gs / norm - xs * dot / norm**3
        return (gx,)


# -- public op surface -------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return MatMul.apply(a, b)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    lead = {t.shape[:-1] for t in tensors}
    if len(lead) != 1:
        raise DimensionError(f"concat needs equal leading dims, got {[t.shape for t in tensors]}")
    return Concat.apply(*tensors)


def slice_columns(x: Tensor, start: int, stop: int) -> Tensor:
    width = x.shape[-1]
    if not 0 <= start <= stop <= width:
        raise ContractError(f"column slice [{start}, {stop}) outside width {width}")
    return SliceColumns.apply(x, start=start, stop=stop)


def take(x: Tensor, indices: Iterable[int]) -> Tensor:
    indices = np.asarray(list(indices), dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[-1]):
        raise ContractError(f"take indices outside width {x.shape[-1]}")
    return Take.apply(x, indices=indices)


def _bounds(segment: Segment, width: int) -> Tuple[int, int]:
    if isinstance(segment, range):
        if segment.step != 1:
            raise ContractError("segment ranges must be contiguous")
        lo, hi = segment.start, segment.stop
    else:
        lo, hi = segment
    lo, hi = int(lo), int(hi)
    if not 0 <= lo < hi <= width:
        raise ContractError(f"segment [{lo}, {hi}) outside width {width}")
    return lo, hi


def l2_normalize_segments(x: Tensor, segments: Sequence[Segment]) -> Tensor:
    x = as_tensor(x)
    bounds = sorted(_bounds(s, x.shape[-1]) for s in segments)
    for (_, prev_hi), (lo, _) in zip(bounds, bounds[1:]):
        if lo < prev_hi:
            raise ContractError(f"segments overlap: {bounds}")
    return SegmentNormalize.apply(x, segments=bounds)


def l2_normalize_segment(x: Tensor, segment: Segment) -> Tensor:
    return l2_normalize_segments(x, [segment])


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for parent in reversed(node.creator.inputs):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dLeaf into every reachable ``requires_grad`` leaf."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor with requires_grad")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.creator is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        for parent, parent_grad in zip(node.creator.inputs, node.creator.backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def numerical_gradient(
    fn: Callable[[np.ndarray], float], point: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences of a scalar function."""
    point = np.array(point, dtype=np.float64)
    grad = np.zeros_like(point)
    for i in range(point.size):
        orig = point.flat[i]
        point.flat[i] = orig + step
        plus = fn(point)
        point.flat[i] = orig - step
        minus = fn(point)
        point.flat[i] = orig
        grad.flat[i] = (plus - minus) / (2.0 * step)
    return grad
