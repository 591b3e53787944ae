"""Per-vertical average precision (pvap), its mean (mpvap) and loss-curve export."""
import csv
import io
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from jinja2 import Template

from kconc.errors import ContractError, NoDataError, UndefinedAPError
from kconc.models import EvalResult
from kconc.taxonomy import ClassLayout, LabelTaxonomy

logger = logging.getLogger(__name__)


def average_precision(scores, relevance, sample_ids: Optional[Sequence[int]] = None) -> float:
    """Mean over positives of precision at the positive's rank.

    Ranking is by descending score, ties broken by ascending sample id (position
    in the input when no ids are given).
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevance = np.asarray(relevance).astype(bool)
    if scores.shape != relevance.shape or scores.ndim != 1:
        raise ContractError(f"scores {scores.shape} and relevance {relevance.shape} must be equal 1-D shapes")
    ids = np.arange(len(scores)) if sample_ids is None else np.asarray(sample_ids)
    if not relevance.any():
        raise UndefinedAPError("average precision is undefined without positives")
    order = np.lexsort((ids, -scores))
    ranked = relevance[order]
    hits = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    return float(np.mean(hits[ranked] / ranks[ranked]))


def pvap(
    scores: np.ndarray,
    labels: Sequence[int],
    vertical_id: int,
    tax: LabelTaxonomy,
    layout: Optional[ClassLayout] = None,
    sample_ids: Optional[Sequence[int]] = None,
) -> Tuple[float, Dict[int, float], List[int]]:
    """pvap of one vertical.

    Only test samples whose groundtruth falls in the vertical take part, and
    only the vertical's class columns are scored. Classes without a positive are
    skipped. Returns ``(pvap, per-class AP, skipped classes)``.
    """
    layout = layout or tax.class_layout()
    labels = np.asarray(labels)
    ids = np.arange(len(labels)) if sample_ids is None else np.asarray(sample_ids)
    rows = np.array([tax.f_map(int(l)) == vertical_id for l in labels], dtype=bool)
    if not rows.any():
        raise NoDataError(f"no test samples in vertical {vertical_id}")
    lo, hi = layout.ranges[vertical_id]
    per_class, skipped = {}, []
    for col in range(lo, hi):
        class_id = layout.order[col]
        relevance = labels[rows] == class_id
        if not relevance.any():
            skipped.append(class_id)
            continue
        per_class[class_id] = average_precision(scores[rows, col], relevance, ids[rows])
    if skipped:
        logger.warning(f"Vertical {vertical_id}: {len(skipped)} classes without test positives excluded")
    if not per_class:
        raise NoDataError(f"no class of vertical {vertical_id} has a test positive")
    return float(np.mean(list(per_class.values()))), per_class, skipped


def mpvap(pvaps: Sequence[float]) -> float:
    """Unweighted mean over verticals."""
    if isinstance(pvaps, Mapping):
        pvaps = list(pvaps.values())
    if not len(pvaps):
        raise ContractError("mpvap needs at least one vertical")
    return float(np.mean(pvaps))


def evaluate(
    scores: np.ndarray,
    labels: Sequence[int],
    tax: LabelTaxonomy,
    sample_ids: Optional[Sequence[int]] = None,
) -> EvalResult:
    layout = tax.class_layout()
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(labels), layout.num_classes):
        raise ContractError(f"scores {scores.shape} do not match {len(labels)} samples x {layout.num_classes} classes")
    per_vertical, per_class, counts, skipped = {}, {}, {}, []
    for v in layout.vertical_ids:
        value, class_aps, missing = pvap(scores, labels, v, tax, layout, sample_ids)
        per_vertical[v] = value
        per_class.update(class_aps)
        skipped.extend(missing)
        counts[v] = int(sum(tax.f_map(int(l)) == v for l in labels))
    return EvalResult(
        per_vertical=per_vertical,
        mpvap=mpvap(list(per_vertical.values())),
        per_class_ap=per_class,
        sample_counts=counts,
        skipped_classes=skipped,
    )


EVAL_TEMPLATE = Template(
    """| method |{% for v in verticals %} {{ names[v] }} |{% endfor %} mpvap |
|---|{% for v in verticals %}---:|{% endfor %}---:|
{% for label, result in rows -%}
| {{ label }} |{% for v in verticals %} {{ "%.1f"|format(100 * result.per_vertical[v]) }} |{% endfor %} {{ "%.1f"|format(100 * result.mpvap) }} |
{% endfor %}"""
)


def render_eval_table(rows: Sequence[Tuple[str, EvalResult]], tax: LabelTaxonomy) -> str:
    """Per-vertical AP table, one row per method, percentages with one decimal."""
    verticals = list(tax.vertical_roots)
    names = {v: tax.node(v).name for v in verticals}
    return EVAL_TEMPLATE.render(rows=rows, verticals=verticals, names=names)


# Loss curves
CURVE_FIELDS = ("step", "run", "loss")


def export_loss_curves(runs: Mapping[str, Sequence[float]]) -> str:
    """CSV with columns step, run, loss; step counts from 1 and must match across runs."""
    lengths = {label: len(losses) for label, losses in runs.items()}
    if len(set(lengths.values())) > 1:
        raise ContractError(f"runs do not share a step grid: {lengths}")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CURVE_FIELDS)
    for label, losses in runs.items():
        for step, loss in enumerate(losses, start=1):
            writer.writerow([step, label, repr(float(loss))])
    return out.getvalue()


def parse_loss_curves(text: str) -> Dict[str, List[float]]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CURVE_FIELDS:
        raise ContractError(f"loss curve CSV must have columns {CURVE_FIELDS}")
    runs: Dict[str, List[float]] = {}
    for row in reader:
        runs.setdefault(row["run"], []).append(float(row["loss"]))
    return runs
