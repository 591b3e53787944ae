"""Synthetic hierarchical benchmark and the dataset file format."""
import json
import logging
import math
from pathlib import Path
from typing import Iterable, List, Tuple, Union

import numpy as np

from kconc.errors import SpecValidationError
from kconc.models import SampleRecord, Split, SyntheticSpec, TaxonomyNode
from kconc.seeding import derive_rng
from kconc.storage import atomic_write_text
from kconc.taxonomy import LabelTaxonomy, dump_taxonomy

logger = logging.getLogger(__name__)


class Dataset:
    """Samples kept in sample-id order; every feature vector has the same width."""

    def __init__(self, records: Iterable[SampleRecord]):
        self.records: List[SampleRecord] = sorted(records, key=lambda r: r.sample_id)
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise SpecValidationError("duplicate sample ids in dataset")
        widths = {len(r.features) for r in self.records}
        if len(widths) > 1:
            raise SpecValidationError(f"feature widths differ across samples: {sorted(widths)}")
        self.d_in = widths.pop() if widths else 0

    def __len__(self) -> int:
        return len(self.records)

    def split(self, split: Split) -> "Dataset":
        return Dataset(r for r in self.records if r.split == split)

    def in_vertical(self, tax: LabelTaxonomy, vertical_id: int) -> "Dataset":
        return Dataset(r for r in self.records if tax.f_map(r.label_id) == vertical_id)

    def features(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.d_in))
        return np.array([r.features for r in self.records], dtype=np.float64)

    def labels(self) -> np.ndarray:
        return np.array([r.label_id for r in self.records], dtype=np.int64)

    def sample_ids(self) -> np.ndarray:
        return np.array([r.sample_id for r in self.records], dtype=np.int64)

    def check_labels(self, tax: LabelTaxonomy) -> None:
        unknown = sorted({r.label_id for r in self.records if r.label_id not in tax})
        if unknown:
            raise SpecValidationError(f"labels missing from taxonomy: {unknown}")


def build_synthetic_taxonomy(spec: SyntheticSpec) -> LabelTaxonomy:
    """entity -> vertical roots -> groups of ``leaves_per_group`` -> leaves.

    Ids: root 0, vertical roots 1..M, then all group nodes, then all leaves, each
    block in vertical order.
    """
    M, L = spec.num_verticals, spec.leaves_per_vertical
    groups_per_vertical = math.ceil(L / spec.leaves_per_group)
    nodes = [TaxonomyNode(id=0, name="entity")]
    for m in range(M):
        nodes.append(TaxonomyNode(id=1 + m, name=f"vertical-{m}", parent_id=0, is_vertical_root=True))
    group_base = 1 + M
    for m in range(M):
        for g in range(groups_per_vertical):
            gid = group_base + m * groups_per_vertical + g
            nodes.append(TaxonomyNode(id=gid, name=f"vertical-{m}/group-{g}", parent_id=1 + m))
    leaf_base = group_base + M * groups_per_vertical
    for m in range(M):
        for i in range(L):
            parent = group_base + m * groups_per_vertical + i // spec.leaves_per_group
            nodes.append(
                TaxonomyNode(id=leaf_base + m * L + i, name=f"vertical-{m}/class-{i}", parent_id=parent)
            )
    return LabelTaxonomy(nodes)


def standardize(blocks: np.ndarray, train_per_class: int) -> np.ndarray:
    """Zero mean, unit variance per feature, using the first ``train_per_class`` rows of every class."""
    train = blocks[:, :train_per_class].reshape(-1, blocks.shape[-1])
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    return (blocks - mean) / np.where(std > 0, std, 1.0)


def generate_synthetic(spec: SyntheticSpec) -> Tuple[LabelTaxonomy, Dataset]:
    """One Gaussian cluster per leaf.

    Leaf centers sit around their vertical's center at distance scaled by
    ``(1 - confusability) * leaf_spread``; samples add isotropic noise. Each leaf
    draws from its own derived seed, and keeps exactly ``test_per_class`` samples
    for the test split.

    Features are standardized per dimension with the train split's mean and
    standard deviation, so the sigmoid base starts out of saturation.
    """
    if not 0.0 <= spec.confusability <= 1.0:
        raise SpecValidationError(f"confusability {spec.confusability} outside [0, 1]")
    tax = build_synthetic_taxonomy(spec)
    d = spec.d_in
    centers = {
        v: spec.vertical_spread * derive_rng(spec.seed, "vertical", v).standard_normal(d)
        for v in tax.vertical_roots
    }
    offset_scale = (1.0 - spec.confusability) * spec.leaf_spread
    per_class = spec.train_per_class + spec.test_per_class

    leaves = tax.leaves()
    blocks = []
    for leaf in leaves:
        rng = derive_rng(spec.seed, "class", leaf)
        center = centers[tax.f_map(leaf)] + offset_scale * rng.standard_normal(d)
        blocks.append(center + spec.noise * rng.standard_normal((per_class, d)))
    features = standardize(np.stack(blocks), spec.train_per_class)

    records = []
    next_id = 0
    for leaf, samples in zip(leaves, features):
        for i, row in enumerate(samples):
            split = Split.TRAIN if i < spec.train_per_class else Split.TEST
            records.append(
                SampleRecord(sample_id=next_id, split=split, label_id=leaf, features=row.tolist())
            )
            next_id += 1
    logger.info(
        f"Generated {len(records)} samples over {tax.num_classes} classes in "
        f"{len(tax.vertical_roots)} verticals (confusability={spec.confusability})"
    )
    return tax, Dataset(records)


# Dataset file (one JSON record per line)
def dumps_dataset(dataset: Dataset) -> str:
    return "".join(json.dumps(r.model_dump(mode="json")) + "\n" for r in dataset.records)


def loads_dataset(text: str) -> Dataset:
    return Dataset(SampleRecord.model_validate_json(line) for line in text.splitlines() if line.strip())


def dump_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, dumps_dataset(dataset))


def load_dataset(path: Union[str, Path]) -> Dataset:
    dataset = loads_dataset(Path(path).read_text())
    logger.info(f"Loaded {len(dataset)} samples from {path}")
    return dataset


def write_synthetic(
    spec: SyntheticSpec, out_dir: Union[str, Path], tax_name: str = "taxonomy.jsonl",
    data_name: str = "dataset.jsonl",
) -> Tuple[Path, Path]:
    tax, dataset = generate_synthetic(spec)
    out_dir = Path(out_dir)
    return dump_taxonomy(tax, out_dir / tax_name), dump_dataset(dataset, out_dir / data_name)

