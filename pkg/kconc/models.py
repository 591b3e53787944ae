import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


class Topology(str, Enum):
    FC_FC = "fc-fc"
    FC_SC = "fc-sc"
    SC_SC = "sc-sc"
    FC_SC_GENERIC = "fc-sc-generic"


class ScalingMode(str, Enum):
    NONE = "none"
    VERTICAL = "vertical"
    CLASS = "class"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class ModelRole(str, Enum):
    TEACHER = "teacher"
    STUDENT = "student"
    BASELINE = "baseline"


# Architecture Models
class ArchSizes(BaseModel):
    """Layer sizes chosen by the user; class counts come from the taxonomy."""

    topology: Topology = Topology.FC_FC
    d_in: int = Field(32, gt=0)
    base_hidden: int = Field(16, gt=0)
    s_b: int = Field(16, gt=0)
    s1: int = Field(32, gt=0)  # s1s for shared top-1, s1i for per-vertical top-1
    s2: int = Field(8, gt=0)
    generic_size: int = Field(0, ge=0)
    use_bias: bool = False

    def resolve(self, class_counts: List[int]) -> "ArchSpec":
        return ArchSpec(
            **self.model_dump(),
            num_verticals=len(class_counts),
            num_classes=sum(class_counts),
            class_counts=list(class_counts),
        )


class ArchSpec(ArchSizes):
    num_verticals: int
    num_classes: int
    class_counts: List[int]

    def violations(self) -> List[str]:
        problems = []
        for name in ("d_in", "base_hidden", "s_b", "s1", "s2", "num_verticals", "num_classes"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if len(self.class_counts) != self.num_verticals:
            problems.append(
                f"{len(self.class_counts)} class counts given for {self.num_verticals} verticals"
            )
        if any(n <= 0 for n in self.class_counts):
            problems.append("every vertical needs at least one class")
        if sum(self.class_counts) != self.num_classes:
            problems.append(
                f"class counts sum to {sum(self.class_counts)}, expected N={self.num_classes}"
            )
        if self.generic_size < 0 or self.generic_size > self.s2:
            problems.append(f"generic size x={self.generic_size} must satisfy 0 <= x <= s2={self.s2}")
        if self.generic_size and self.topology != Topology.FC_SC_GENERIC:
            problems.append(f"generic size is only valid for {Topology.FC_SC_GENERIC.value}")
        return problems

    @model_validator(mode="after")
    def check_invariants(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def segments(self) -> List[Tuple[int, int]]:
        bounds, start = [], 0
        for n in self.class_counts:
            bounds.append((start, start + n))
            start += n
        return bounds


def _const_gamma(value: str) -> Optional[float]:
    """The number in ``const:<float literal>``, or None when ``value`` is not of that form."""
    prefix, sep, number = value.partition(":")
    if prefix != "const" or not sep or number != number.strip():
        return None
    try:
        parsed = float(number)
    except ValueError:
        return None
    return parsed if math.isfinite(parsed) else None


class HeadSpec(BaseModel):
    """Requested self-paced head: per-vertical L2 normalization then scaling by gamma."""

    mode: ScalingMode = ScalingMode.NONE
    gamma_init: str = "sqrt-nv"
    gamma_dev: float = Field(1e-3, ge=0)
    trainable: bool = True

    @field_validator("gamma_init")
    @classmethod
    def check_gamma_init(cls, value: str) -> str:
        if value != "sqrt-nv" and _const_gamma(value) is None:
            raise ValueError("gamma_init must be 'sqrt-nv' or 'const:<value>'")
        return value

    def init_mean(self, n_v: int) -> float:
        if self.gamma_init == "sqrt-nv":
            return math.sqrt(n_v)
        return _const_gamma(self.gamma_init)


# Taxonomy Models
class TaxonomyNode(BaseModel):
    id: int = Field(ge=0)
    name: str
    parent_id: Optional[int] = None
    is_vertical_root: bool = False


class SmearedLabel(BaseModel):
    sample_id: Optional[int] = None
    leaf_id: int
    positives: List[int]


# Data Models
class SampleRecord(BaseModel):
    sample_id: int = Field(ge=0)
    split: Split
    label_id: int = Field(ge=0)
    features: List[float]


class SyntheticSpec(BaseModel):
    num_verticals: int = Field(4, gt=0)
    leaves_per_vertical: int = Field(25, gt=0)
    leaves_per_group: int = Field(5, gt=0)
    d_in: int = Field(32, gt=0)
    train_per_class: int = Field(40, gt=0)
    test_per_class: int = Field(10, gt=0)
    confusability: float = Field(0.7, ge=0.0, le=1.0)
    vertical_spread: float = Field(4.0, gt=0)
    leaf_spread: float = Field(3.0, gt=0)
    noise: float = Field(1.0, gt=0)
    seed: int = 0


class SoftTargetRecord(BaseModel):
    sample_id: int
    vertical_id: int
    targets: List[Tuple[int, float]]

    @field_validator("targets")
    @classmethod
    def check_probabilities(cls, value):
        for class_id, prob in value:
            if not 0.0 < prob <= 1.0:
                raise ValueError(f"probability {prob!r} for class {class_id} outside (0, 1]")
        return value


# Training Models
class TrainConfig(BaseModel):
    k: int = Field(100, ge=1)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(0.001, ge=0)
    adagrad_eps: float = Field(1e-8, ge=0)
    epochs: int = Field(10, ge=1)
    max_steps: Optional[int] = Field(None, ge=1)
    seed: int = 0
    arch: ArchSizes = ArchSizes()
    teacher_arch: ArchSizes = ArchSizes(base_hidden=64, s_b=64, s1=64, s2=64)
    head: HeadSpec = HeadSpec()
    include_root_in_smear: bool = True
    force_include_groundtruth: bool = False


# Evaluation Models
class EvalResult(BaseModel):
    per_vertical: Dict[int, float]
    mpvap: float
    per_class_ap: Dict[int, float]
    sample_counts: Dict[int, int]
    skipped_classes: List[int] = []


# Budget Models
class BudgetInput(BaseModel):
    topology: Topology
    num_classes: int
    num_verticals: int
    s_b: int
    s1: int
    s2: int
    generic_size: int = 0
    label: Optional[str] = None

    @model_validator(mode="after")
    def check_sizes(self):
        for name in ("num_classes", "num_verticals", "s_b", "s1", "s2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.generic_size <= self.s2:
            raise ValueError(f"generic size x={self.generic_size} must satisfy 0 <= x <= s2={self.s2}")
        return self

    @classmethod
    def from_arch(cls, spec: ArchSpec, label: Optional[str] = None) -> "BudgetInput":
        return cls(
            topology=spec.topology,
            num_classes=spec.num_classes,
            num_verticals=spec.num_verticals,
            s_b=spec.s_b,
            s1=spec.s1,
            s2=spec.s2,
            generic_size=spec.generic_size,
            label=label,
        )


class BudgetRow(BaseModel):
    label: str
    topology: Topology
    generic_size: int
    params: int
    delta: Optional[int] = None
    bytes: int


class BudgetReport(BaseModel):
    baseline: str
    bytes_per_param: int = 8
    rows: List[BudgetRow]


# Checkpoint Models
class TensorEntry(BaseModel):
    name: str
    shape: List[int]


class CheckpointHeader(BaseModel):
    format_version: int
    role: ModelRole
    arch: ArchSpec
    head: HeadSpec
    seed: int
    class_ids: List[int]
    vertical_id: Optional[int] = None
    tensors: List[TensorEntry]


# Bench Models
class BenchRow(BaseModel):
    arm: str
    tables: List[str]
    topology: Optional[Topology] = None
    generic_size: int = 0
    distilled: bool = False
    self_paced: ScalingMode = ScalingMode.NONE
    gamma_init: Optional[str] = None
    gamma_trainable: Optional[bool] = None
    top_params: Optional[int] = None
    final_loss: Optional[float] = None
    mpvap: float
    per_vertical: Dict[int, float]


class BenchReport(BaseModel):
    seed: int
    num_classes: int
    num_verticals: int
    rows: List[BenchRow]
