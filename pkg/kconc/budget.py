"""Closed-form top-layer parameter counts for the four topologies."""
import logging
from typing import List, Optional, Sequence

from jinja2 import Template

from kconc.errors import ContractError
from kconc.models import BudgetInput, BudgetReport, BudgetRow, Topology

logger = logging.getLogger(__name__)

BYTES_PER_PARAM = 8


def count_params(budget: BudgetInput) -> int:
    """Top-layer weights only (no biases, no base network)."""
    N, M = budget.num_classes, budget.num_verticals
    s_b, s1, s2, x = budget.s_b, budget.s1, budget.s2, budget.generic_size
    if budget.topology == Topology.FC_FC:
        return s2 * N + s2 * s1 + s1 * s_b
    if budget.topology == Topology.FC_SC:
        return s2 * N + M * s2 * s1 + s1 * s_b
    if budget.topology == Topology.SC_SC:
        return s2 * N + M * s2 * s1 + M * s1 * s_b
    return s2 * N + M * (s2 - x) * s1 + x * s1 + s1 * s_b


def _label(budget: BudgetInput) -> str:
    if budget.label:
        return budget.label
    if budget.topology == Topology.FC_SC_GENERIC:
        return f"{budget.topology.value}(x={budget.generic_size})"
    return budget.topology.value


def compare_budgets(inputs: Sequence[BudgetInput], baseline: Optional[str] = None) -> BudgetReport:
    """Tabulate counts, deltas against ``baseline`` (default: first input) and bytes."""
    if not inputs:
        raise ContractError("compare_budgets needs at least one input")
    labels = [_label(b) for b in inputs]
    baseline = baseline or labels[0]
    if baseline not in labels:
        raise ContractError(f"baseline {baseline!r} is not one of {labels}")
    counts = [count_params(b) for b in inputs]
    base_count = counts[labels.index(baseline)]
    rows = []
    for label, budget, count in zip(labels, inputs, counts):
        rows.append(
            BudgetRow(
                label=label,
                topology=budget.topology,
                generic_size=budget.generic_size,
                params=count,
                delta=None if len(inputs) == 1 else count - base_count,
                bytes=count * BYTES_PER_PARAM,
            )
        )
    return BudgetReport(baseline=baseline, bytes_per_param=BYTES_PER_PARAM, rows=rows)


def topology_budgets(
    num_classes: int, num_verticals: int, s_b: int, s1: int, s2: int, generic_size: int = 1
) -> List[BudgetInput]:
    """The four topologies at shared sizes, FC-FC first."""
    shared = dict(num_classes=num_classes, num_verticals=num_verticals, s_b=s_b, s1=s1, s2=s2)
    return [
        BudgetInput(topology=Topology.FC_FC, **shared),
        BudgetInput(topology=Topology.FC_SC, **shared),
        BudgetInput(topology=Topology.SC_SC, **shared),
        BudgetInput(topology=Topology.FC_SC_GENERIC, generic_size=generic_size, **shared),
    ]


def generic_sweep(
    num_classes: int, num_verticals: int, s_b: int, s1: int, s2: int, sizes: Sequence[int]
) -> List[BudgetInput]:
    shared = dict(num_classes=num_classes, num_verticals=num_verticals, s_b=s_b, s1=s1, s2=s2)
    return [BudgetInput(topology=Topology.FC_SC_GENERIC, generic_size=x, **shared) for x in sizes]


BUDGET_TEMPLATE = Template(
    """| model | #params | delta vs {{ report.baseline }} | bytes |
|---|---:|---:|---:|
{% for row in report.rows -%}
| {{ row.label }} | {{ "{:,}".format(row.params) }} | {{ "-" if row.delta is none else "{:+,}".format(row.delta) }} | {{ "{:,}".format(row.bytes) }} |
{% endfor %}"""
)


def render_budget_table(report: BudgetReport) -> str:
    return BUDGET_TEMPLATE.render(report=report)
