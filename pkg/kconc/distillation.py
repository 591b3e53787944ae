"""Teachers, top-K soft targets and the single student (plus the hard-label baseline)."""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from kconc.checkpoints import LoadedCheckpoint, save_checkpoint
from kconc.datasets import Dataset
from kconc.errors import MissingTargetsError, NoDataError, RoutingError
from kconc.layers import Model, build_model
from kconc.losses import sigmoid_ce
from kconc.models import ArchSizes, HeadSpec, ModelRole, Split, SoftTargetRecord, TrainConfig
from kconc.optim import Adagrad
from kconc.seeding import derive_seed
from kconc.storage import atomic_write_text
from kconc.taxonomy import ClassLayout, LabelTaxonomy
from kconc.tensor import Tensor, backward
from kconc.workers.pool import run_parallel

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    """A trained model plus what its output columns mean and how training went."""

    model: Model
    role: ModelRole
    class_ids: List[int]
    losses: List[float] = field(default_factory=list)
    vertical_id: Optional[int] = None

    @property
    def final_loss(self) -> Optional[float]:
        return self.losses[-1] if self.losses else None

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(self.model, path, self.role, self.class_ids, self.vertical_id)

    @classmethod
    def from_checkpoint(cls, loaded: LoadedCheckpoint) -> "TrainResult":
        header = loaded.header
        return cls(loaded.model, header.role, list(header.class_ids), vertical_id=header.vertical_id)

    def scores(self, features: np.ndarray) -> np.ndarray:
        return self.model.probabilities(features)


def fit(model: Model, features: np.ndarray, targets: np.ndarray, cfg: TrainConfig, seed: int) -> List[float]:
    """Mini-batch Adagrad on the sigmoid cross-entropy; returns the per-step loss."""
    n = len(features)
    if n == 0:
        raise NoDataError("cannot train on an empty sample set")
    rng = np.random.default_rng(seed)
    optimizer = Adagrad(model.trainable_parameters(), cfg.learning_rate, cfg.adagrad_eps)
    losses: List[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            optimizer.zero_grad()
            loss = sigmoid_ce(model.predict(Tensor(features[batch])), targets[batch])
            backward(loss)
            optimizer.step()
            losses.append(loss.item())
            if cfg.max_steps and len(losses) >= cfg.max_steps:
                return losses
        logger.debug(f"epoch {epoch + 1}/{cfg.epochs}: last batch loss {losses[-1]:.6f}")
    return losses


def _resolve_arch(sizes: ArchSizes, d_in: int, class_counts: Sequence[int]):
    return sizes.model_copy(update={"d_in": d_in}).resolve(list(class_counts))


# Teachers
def teacher_targets(tax: LabelTaxonomy, vertical_id: int, labels: Iterable[int], include_root: bool = True) -> np.ndarray:
    """Smeared labels restricted to the vertical's subtree, one row per sample."""
    columns = {c: i for i, c in enumerate(tax.subtree(vertical_id))}
    labels = list(labels)
    targets = np.zeros((len(labels), len(columns)))
    for row, leaf in enumerate(labels):
        for label in tax.smear(leaf, include_root=include_root).positives:
            if label in columns:
                targets[row, columns[label]] = 1.0
    return targets


def train_teacher(tax: LabelTaxonomy, vertical_id: int, dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """Specialist over one vertical's subtree, trained with smeared labels."""
    train = dataset.split(Split.TRAIN).in_vertical(tax, vertical_id)
    if not len(train):
        raise NoDataError(f"no training samples in vertical {vertical_id}")
    class_ids = tax.subtree(vertical_id)
    spec = _resolve_arch(cfg.teacher_arch, train.d_in, [len(class_ids)])
    model = build_model(spec, HeadSpec(), derive_seed(cfg.seed, "teacher", vertical_id, "init"))
    logger.info(f"Training teacher for vertical {vertical_id}: {len(train)} samples, {len(class_ids)} labels")
    targets = teacher_targets(tax, vertical_id, train.labels(), cfg.include_root_in_smear)
    losses = fit(model, train.features(), targets, cfg, derive_seed(cfg.seed, "teacher", vertical_id, "shuffle"))
    logger.info(f"Teacher {vertical_id} done: final loss {losses[-1]:.6f}")
    return TrainResult(model, ModelRole.TEACHER, class_ids, losses, vertical_id)


def train_teachers(
    tax: LabelTaxonomy, dataset: Dataset, cfg: TrainConfig, max_workers: int = 1
) -> Dict[int, TrainResult]:
    """One teacher per vertical; verticals are independent and may train in parallel."""
    verticals = list(tax.vertical_roots)
    jobs = [lambda v=v: train_teacher(tax, v, dataset, cfg) for v in verticals]
    return dict(zip(verticals, run_parallel(jobs, max_workers)))


# Soft targets
def _top_k(class_ids: np.ndarray, probs: np.ndarray, k: int, must_include: Optional[int] = None) -> List:
    # descending probability, ties to the smaller class id
    order = np.lexsort((class_ids, -probs))
    keep = list(order[:k])
    if must_include is not None:
        where = int(np.flatnonzero(class_ids == must_include)[0])
        if where not in keep:
            keep[-1] = where
            keep.sort(key=lambda i: (-probs[i], class_ids[i]))
    return [(int(class_ids[i]), float(probs[i])) for i in keep if probs[i] > 0.0]


def generate_soft_targets(
    teachers: Mapping[int, TrainResult],
    tax: LabelTaxonomy,
    dataset: Dataset,
    k: int,
    force_include_groundtruth: bool = False,
) -> List[SoftTargetRecord]:
    """Route each sample to the teacher of F_map(groundtruth) and keep its top-K leaf probabilities.

    Probabilities are the teacher's raw sigmoid outputs (never renormalized);
    every class outside the record is an implicit zero.
    """
    by_vertical: Dict[int, List[int]] = {}
    for i, label in enumerate(dataset.labels()):
        by_vertical.setdefault(tax.f_map(int(label)), []).append(i)
    missing = sorted(set(by_vertical) - set(teachers))
    if missing:
        raise RoutingError(f"no teacher for vertical(s) {missing}")

    features, labels, sample_ids = dataset.features(), dataset.labels(), dataset.sample_ids()
    records = []
    for vertical_id, rows in sorted(by_vertical.items()):
        teacher = teachers[vertical_id]
        leaves = tax.vertical_leaves(vertical_id)
        columns = [teacher.class_ids.index(c) for c in leaves]
        probs = teacher.scores(features[rows])[:, columns]
        leaf_ids = np.array(leaves)
        for row, p in zip(rows, probs):
            gt = int(labels[row]) if force_include_groundtruth else None
            records.append(
                SoftTargetRecord(
                    sample_id=int(sample_ids[row]),
                    vertical_id=vertical_id,
                    targets=_top_k(leaf_ids, p, k, gt),
                )
            )
    records.sort(key=lambda r: r.sample_id)
    logger.info(f"Generated soft targets for {len(records)} samples (K={k})")
    return records


def densify_targets(
    records: Iterable[SoftTargetRecord], layout: ClassLayout, sample_ids: Sequence[int]
) -> np.ndarray:
    by_id = {r.sample_id: r for r in records}
    missing = [int(s) for s in sample_ids if int(s) not in by_id]
    if missing:
        raise MissingTargetsError(missing)
    dense = np.zeros((len(sample_ids), layout.num_classes))
    for row, sample_id in enumerate(sample_ids):
        for class_id, prob in by_id[int(sample_id)].targets:
            dense[row, layout.position[class_id]] = prob
    return dense


def dumps_soft_targets(records: Iterable[SoftTargetRecord]) -> str:
    lines = []
    for r in records:
        pairs = ", ".join(f"[{c}, {format(p, '.17g')}]" for c, p in r.targets)
        lines.append(f'{{"sample_id": {r.sample_id}, "vertical_id": {r.vertical_id}, "targets": [{pairs}]}}\n')
    return "".join(lines)


def loads_soft_targets(text: str) -> List[SoftTargetRecord]:
    return [SoftTargetRecord.model_validate(json.loads(line)) for line in text.splitlines() if line.strip()]


def dump_soft_targets(records: Iterable[SoftTargetRecord], path: Union[str, Path]) -> Path:
    return atomic_write_text(path, dumps_soft_targets(records))


def load_soft_targets(path: Union[str, Path]) -> List[SoftTargetRecord]:
    return loads_soft_targets(Path(path).read_text())


# Student and baseline
def train_student(
    tax: LabelTaxonomy,
    dataset: Dataset,
    soft_targets: Iterable[SoftTargetRecord],
    cfg: TrainConfig,
    arch: Optional[ArchSizes] = None,
    head: Optional[HeadSpec] = None,
) -> TrainResult:
    """Single model over all N leaves trained on densified soft targets. No smearing."""
    train = dataset.split(Split.TRAIN)
    layout = tax.class_layout()
    targets = densify_targets(soft_targets, layout, train.sample_ids())
    spec = _resolve_arch(arch or cfg.arch, train.d_in, layout.class_counts)
    head = head or cfg.head
    model = build_model(spec, head, derive_seed(cfg.seed, "student", "init"))
    logger.info(
        f"Training student {spec.topology.value} head={head.mode.value} on {len(train)} samples, "
        f"{layout.num_classes} classes"
    )
    losses = fit(model, train.features(), targets, cfg, derive_seed(cfg.seed, "student", "shuffle"))
    return TrainResult(model, ModelRole.STUDENT, list(layout.order), losses)


def hard_targets(labels: Iterable[int], layout: ClassLayout) -> np.ndarray:
    labels = list(labels)
    targets = np.zeros((len(labels), layout.num_classes))
    for row, label in enumerate(labels):
        targets[row, layout.position[int(label)]] = 1.0
    return targets


def train_generalist_baseline(
    tax: LabelTaxonomy,
    dataset: Dataset,
    cfg: TrainConfig,
    arch: Optional[ArchSizes] = None,
    head: Optional[HeadSpec] = None,
) -> TrainResult:
    """Hard (unsmeared) leaf labels over all N classes, same loss form as the teachers."""
    train = dataset.split(Split.TRAIN)
    if not len(train):
        raise NoDataError("no training samples")
    layout = tax.class_layout()
    spec = _resolve_arch(arch or cfg.arch, train.d_in, layout.class_counts)
    head = head or cfg.head
    model = build_model(spec, head, derive_seed(cfg.seed, "student", "init"))
    logger.info(f"Training hard-label baseline {spec.topology.value} on {len(train)} samples")
    targets = hard_targets(train.labels(), layout)
    losses = fit(model, train.features(), targets, cfg, derive_seed(cfg.seed, "student", "shuffle"))
    return TrainResult(model, ModelRole.BASELINE, list(layout.order), losses)


def specialist_scores(
    teachers: Mapping[int, TrainResult], tax: LabelTaxonomy, features: np.ndarray
) -> np.ndarray:
    """Score matrix in student layout where each vertical's columns come from its own teacher."""
    layout = tax.class_layout()
    scores = np.zeros((len(features), layout.num_classes))
    for vertical_id, (lo, hi) in layout.ranges.items():
        if vertical_id not in teachers:
            raise RoutingError(f"no teacher for vertical {vertical_id}")
        teacher = teachers[vertical_id]
        columns = [teacher.class_ids.index(c) for c in layout.order[lo:hi]]
        scores[:, lo:hi] = teacher.scores(features)[:, columns]
    return scores
