"""Base feature extractor, the four top-layer topologies and the self-paced head."""
import logging
from collections import OrderedDict
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from kconc.errors import CheckpointShapeError, DimensionError, SpecValidationError
from kconc.models import ArchSpec, HeadSpec, ScalingMode, Topology
from kconc.tensor import (
    Tensor,
    as_tensor,
    concat,
    l2_normalize_segments,
    matmul,
    sigmoid,
    take,
)

logger = logging.getLogger(__name__)

TOP_LAYER_PREFIXES = ("top1.", "top2.", "generic.", "logits.")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    # uniform(-a, a) has variance a^2 / 3 = 2 / (fan_in + fan_out)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def base_extract(
    raw: Tensor,
    w1: Tensor,
    w2: Tensor,
    b1: Optional[Tensor] = None,
    b2: Optional[Tensor] = None,
) -> Tensor:
    """Two sigmoid dense layers mapping raw inputs to ``s_b`` base features."""
    raw = as_tensor(raw)
    if raw.ndim != 2 or raw.shape[1] != w1.shape[0]:
        raise DimensionError(f"raw input {raw.shape} does not match input width {w1.shape[0]}")
    hidden = sigmoid(dense(raw, w1, b1))
    return sigmoid(dense(hidden, w2, b2))


class ScalingHead:
    """Per-vertical L2 normalization of logits followed by multiplication with gamma.

    VERTICAL mode holds one gamma per vertical, CLASS mode one per class. NONE
    passes logits through untouched.
    """

    def __init__(
        self,
        mode: ScalingMode,
        segments: Sequence[Tuple[int, int]],
        gamma: Optional[Tensor] = None,
    ):
        self.mode = ScalingMode(mode)
        self.segments = [tuple(s) for s in segments]
        self.gamma = gamma
        self._vertical_index = [i for i, (lo, hi) in enumerate(self.segments) for _ in range(lo, hi)]
        expected = {
            ScalingMode.NONE: None,
            ScalingMode.VERTICAL: len(self.segments),
            ScalingMode.CLASS: len(self._vertical_index),
        }[self.mode]
        if expected is None:
            if gamma is not None:
                raise SpecValidationError("a NONE head carries no gamma")
        elif gamma is None or gamma.shape != (expected,):
            got = None if gamma is None else gamma.shape
            raise SpecValidationError(f"{self.mode.value} head needs gamma of shape ({expected},), got {got}")

    @classmethod
    def initialize(
        cls, spec: HeadSpec, class_counts: Sequence[int], rng: np.random.Generator
    ) -> "ScalingHead":
        segments, start = [], 0
        for n in class_counts:
            segments.append((start, start + n))
            start += n
        if spec.mode == ScalingMode.NONE:
            return cls(ScalingMode.NONE, segments)
        if spec.mode == ScalingMode.VERTICAL:
            means = np.array([spec.init_mean(n) for n in class_counts])
        else:
            means = np.concatenate([np.full(n, spec.init_mean(n)) for n in class_counts])
        values = means + spec.gamma_dev * rng.standard_normal(means.shape)
        return cls(spec.mode, segments, Tensor(values, requires_grad=spec.trainable))

    def normalize(self, logits: Tensor) -> Tensor:
        return l2_normalize_segments(logits, self.segments)

    def scale(self, normalized: Tensor) -> Tensor:
        if self.mode == ScalingMode.VERTICAL:
            return normalized * take(self.gamma, self._vertical_index)
        return normalized * self.gamma

    def __call__(self, logits: Tensor) -> Tensor:
        if self.mode == ScalingMode.NONE:
            return logits
        return self.scale(self.normalize(logits))


class Model:
    """Base extractor + two top layers (per ArchSpec) + optional scaling head."""

    def __init__(
        self,
        spec: ArchSpec,
        head_spec: HeadSpec,
        seed: int,
        params: "OrderedDict[str, Tensor]",
        head: ScalingHead,
    ):
        self.spec = spec
        self.head_spec = head_spec
        self.seed = seed
        self._params = params
        self.head = head

    # Parameter enumeration
    def parameters(self) -> "OrderedDict[str, Tensor]":
        params = OrderedDict(self._params)
        if self.head.gamma is not None:
            params["head.gamma"] = self.head.gamma
        return params

    def trainable_parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((k, p) for k, p in self.parameters().items() if p.requires_grad)

    def top_layer_weight_count(self) -> int:
        return sum(
            p.size
            for name, p in self._params.items()
            if name.startswith(TOP_LAYER_PREFIXES) and name.endswith(".w")
        )

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(arrays) != set(params):
            raise CheckpointShapeError(
                f"tensor names differ from the architecture: {sorted(set(arrays) ^ set(params))}"
            )
        for name, param in params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != param.shape:
                raise CheckpointShapeError(
                    f"tensor {name} has shape {value.shape}, architecture expects {param.shape}"
                )
        for name, param in params.items():
            param.data = np.array(arrays[name], dtype=np.float64)
            param.grad = None

    # Forward
    def _p(self, name: str) -> Optional[Tensor]:
        return self._params.get(name)

    def base_extract(self, raw: Tensor) -> Tensor:
        return base_extract(
            raw, self._p("base.w1"), self._p("base.w2"), self._p("base.b1"), self._p("base.b2")
        )

    def _layer(self, x: Tensor, name: str) -> Tensor:
        return dense(x, self._p(f"{name}.w"), self._p(f"{name}.b"))

    def top_logits(self, features: Tensor) -> Tensor:
        spec = self.spec
        features = as_tensor(features)
        if features.ndim != 2 or features.shape[1] != spec.s_b:
            raise DimensionError(f"features {features.shape} do not match base width s_b={spec.s_b}")

        if spec.topology == Topology.FC_FC:
            h1 = sigmoid(self._layer(features, "top1"))
            h2 = sigmoid(self._layer(h1, "top2"))
            return self._layer(h2, "logits")

        blocks = []
        if spec.topology == Topology.SC_SC:
            for m in range(spec.num_verticals):
                h1 = sigmoid(self._layer(features, f"top1.v{m}"))
                h2 = sigmoid(self._layer(h1, f"top2.v{m}"))
                blocks.append(self._layer(h2, f"logits.v{m}"))
            return concat(blocks)

        h1 = sigmoid(self._layer(features, "top1"))
        generic = sigmoid(self._layer(h1, "generic")) if spec.generic_size else None
        individual = spec.s2 - spec.generic_size
        for m in range(spec.num_verticals):
            parts = [] if generic is None else [generic]
            if individual:
                parts.append(sigmoid(self._layer(h1, f"top2.v{m}")))
            h2 = parts[0] if len(parts) == 1 else concat(parts)
            blocks.append(self._layer(h2, f"logits.v{m}"))
        return concat(blocks)

    def forward(self, features: Tensor) -> Tensor:
        return self.head(self.top_logits(features))

    def predict(self, raw: Tensor) -> Tensor:
        return self.forward(self.base_extract(raw))

    __call__ = predict

    def probabilities(self, raw: np.ndarray) -> np.ndarray:
        return sigmoid(self.predict(Tensor(raw))).numpy()


def _layer_shapes(spec: ArchSpec) -> List[Tuple[str, int, int]]:
    shapes = [("base.w1", spec.d_in, spec.base_hidden), ("base.w2", spec.base_hidden, spec.s_b)]
    M, counts = spec.num_verticals, spec.class_counts
    if spec.topology == Topology.FC_FC:
        shapes += [
            ("top1.w", spec.s_b, spec.s1),
            ("top2.w", spec.s1, spec.s2),
            ("logits.w", spec.s2, spec.num_classes),
        ]
    elif spec.topology == Topology.SC_SC:
        for m in range(M):
            shapes += [
                (f"top1.v{m}.w", spec.s_b, spec.s1),
                (f"top2.v{m}.w", spec.s1, spec.s2),
                (f"logits.v{m}.w", spec.s2, counts[m]),
            ]
    else:
        # FC_SC is FC_SC_GENERIC with a zero-width generic part
        shapes.append(("top1.w", spec.s_b, spec.s1))
        if spec.generic_size:
            shapes.append(("generic.w", spec.s1, spec.generic_size))
        individual = spec.s2 - spec.generic_size
        for m in range(M):
            if individual:
                shapes.append((f"top2.v{m}.w", spec.s1, individual))
            shapes.append((f"logits.v{m}.w", spec.s2, counts[m]))
    return shapes


def _bias_name(weight_name: str) -> str:
    # "top1.v0.w" -> "top1.v0.b", "base.w1" -> "base.b1"
    if weight_name.endswith(".w"):
        return weight_name[:-2] + ".b"
    return weight_name.replace(".w", ".b")


def build_model(spec: ArchSpec, head: Optional[HeadSpec] = None, seed: int = 0) -> Model:
    """Allocate every weight with seeded Glorot-uniform init (biases start at zero)."""
    problems = spec.violations()
    if problems:
        raise SpecValidationError("invalid ArchSpec: " + "; ".join(problems))
    head = head or HeadSpec()
    rng = np.random.default_rng(seed)

    params: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, fan_in, fan_out in _layer_shapes(spec):
        params[name] = Tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True)
        if spec.use_bias:
            params[_bias_name(name)] = Tensor(np.zeros(fan_out), requires_grad=True)
    scaling = ScalingHead.initialize(head, spec.class_counts, rng)
    model = Model(spec, head, seed, params, scaling)
    logger.debug(
        f"Built {spec.topology.value} model: {model.top_layer_weight_count()} top-layer weights, "
        f"head={head.mode.value}"
    )
    return model


def forward(model: Model, features: Tensor) -> Tensor:
    return model.forward(features)


def parameter_arrays(model: Model) -> Dict[str, np.ndarray]:
    return {name: p.numpy() for name, p in model.parameters().items()}
