import pytest
from pydantic import ValidationError

from kconc.budget import compare_budgets, count_params, generic_sweep, render_budget_table, topology_budgets
from kconc.errors import ContractError
from kconc.models import BudgetInput, BudgetReport, Topology

DESK = dict(num_classes=10, num_verticals=2, s_b=8, s1=4, s2=3)


class TestCountParams:
    def test_full_scale_fully_connected(self):
        budget = BudgetInput(topology=Topology.FC_FC, num_classes=100000, num_verticals=1, s_b=9216, s1=4096, s2=512)
        assert count_params(budget) == 91_045_888

    @pytest.mark.parametrize(
        "topology, expected",
        [(Topology.FC_FC, 74), (Topology.FC_SC, 86), (Topology.SC_SC, 118), (Topology.FC_SC_GENERIC, 82)],
    )
    def test_desk_sizes(self, topology, expected):
        generic_size = 1 if topology == Topology.FC_SC_GENERIC else 0
        assert count_params(BudgetInput(topology=topology, generic_size=generic_size, **DESK)) == expected

    def test_generic_zero_is_fc_sc(self):
        generic = BudgetInput(topology=Topology.FC_SC_GENERIC, generic_size=0, **DESK)
        assert count_params(generic) == count_params(BudgetInput(topology=Topology.FC_SC, **DESK))

    def test_generic_full_width_is_fc_fc(self):
        generic = BudgetInput(topology=Topology.FC_SC_GENERIC, generic_size=3, **DESK)
        assert count_params(generic) == count_params(BudgetInput(topology=Topology.FC_FC, **DESK))

    @pytest.mark.parametrize("num_verticals", [2, 3, 10])
    def test_sweep_strictly_decreasing(self, num_verticals):
        inputs = generic_sweep(100, num_verticals, 64, 32, 16, range(17))
        counts = [count_params(b) for b in inputs]
        assert all(a > b for a, b in zip(counts, counts[1:]))

    def test_single_vertical_sweep_is_flat(self):
        counts = [count_params(b) for b in generic_sweep(100, 1, 64, 32, 16, [0, 4, 16])]
        assert len(set(counts)) == 1

    @pytest.mark.parametrize(
        "field, value",
        [("num_classes", 0), ("s1", -1), ("num_verticals", 0), ("generic_size", 4), ("generic_size", -1)],
    )
    def test_invalid_inputs(self, field, value):
        sizes = dict(DESK, topology=Topology.FC_SC_GENERIC)
        sizes[field] = value
        with pytest.raises(ValidationError):
            BudgetInput(**sizes)


class TestCompareBudgets:
    def test_deltas_against_first(self):
        report = compare_budgets(topology_budgets(**DESK))
        assert report.baseline == "fc-fc"
        assert [row.params for row in report.rows] == [74, 86, 118, 82]
        assert [row.delta for row in report.rows] == [0, 12, 44, 8]
        assert report.rows[3].label == "fc-sc-generic(x=1)"
        assert report.rows[0].bytes == 74 * report.bytes_per_param

    def test_named_baseline(self):
        report = compare_budgets(topology_budgets(**DESK), baseline="sc-sc")
        assert [row.delta for row in report.rows] == [-44, -32, 0, -36]

    def test_single_input_has_no_delta(self):
        report = compare_budgets([BudgetInput(topology=Topology.FC_FC, **DESK)])
        assert report.rows[0].delta is None

    def test_unknown_baseline(self):
        with pytest.raises(ContractError):
            compare_budgets(topology_budgets(**DESK), baseline="nope")

    def test_empty(self):
        with pytest.raises(ContractError):
            compare_budgets([])

    def test_json_round_trip(self):
        report = compare_budgets(topology_budgets(**DESK))
        assert BudgetReport.model_validate_json(report.model_dump_json()) == report

    def test_rendered_table(self):
        budget = BudgetInput(topology=Topology.FC_FC, num_classes=100000, num_verticals=1, s_b=9216, s1=4096, s2=512)
        table = render_budget_table(compare_budgets([budget]))
        assert "| fc-fc | 91,045,888 | - | 728,367,104 |" in table
        table = render_budget_table(compare_budgets(topology_budgets(**DESK)))
        assert "| sc-sc | 118 | +44 | 944 |" in table
