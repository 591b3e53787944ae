import pytest

from kconc.errors import ContractError, NoVerticalError, TaxonomyError, UnknownLabelError
from kconc.models import TaxonomyNode
from kconc.taxonomy import LabelTaxonomy, class_layout, dumps_taxonomy, f_map, loads_taxonomy, smear


class TestSmearing:
    def test_golden_retriever_chain(self, animal_taxonomy):
        smeared = smear(animal_taxonomy, 4, include_root=False)
        assert set(smeared.positives) == {4, 3, 2, 1}

    def test_root_included_by_default(self, animal_taxonomy):
        assert animal_taxonomy.smear(4).positives == [0, 1, 2, 3, 4]

    def test_leaf_under_root(self, animal_taxonomy):
        assert set(animal_taxonomy.smear(11).positives) == {11, 0}

    def test_every_leaf_marks_each_ancestor_and_its_chain(self, tiny_benchmark, animal_taxonomy):
        for tax in (tiny_benchmark[0], animal_taxonomy):
            for leaf in tax.leaves():
                positives = set(tax.smear(leaf).positives)
                for ancestor in tax.ancestors(leaf):
                    assert set(tax.ancestors(ancestor)) <= positives
                    # every leaf under an ancestor marks that ancestor positive
                    for other in tax.subtree(ancestor):
                        if tax.is_leaf(other):
                            assert ancestor in tax.smear(other).positives

    def test_dropping_the_root_only_removes_the_root(self, animal_taxonomy):
        for leaf in animal_taxonomy.leaves():
            full = set(animal_taxonomy.smear(leaf).positives)
            trimmed = set(animal_taxonomy.smear(leaf, include_root=False).positives)
            assert trimmed <= full
            assert full - trimmed == {animal_taxonomy.root_id}

    def test_sibling_leaves_differ_only_in_themselves(self, animal_taxonomy):
        golden, labrador = (set(animal_taxonomy.smear(leaf).positives) for leaf in (4, 5))
        assert golden ^ labrador == {4, 5}

    def test_non_leaf_rejected(self, animal_taxonomy):
        with pytest.raises(ContractError):
            animal_taxonomy.smear(3)

    def test_unknown_label(self, animal_taxonomy):
        with pytest.raises(UnknownLabelError):
            animal_taxonomy.smear(99)
        with pytest.raises(KeyError):
            animal_taxonomy.node(99)


class TestVerticalMap:
    def test_leaf_maps_to_vertical_root(self, animal_taxonomy):
        assert f_map(animal_taxonomy, 4) == 2
        assert f_map(animal_taxonomy, 6) == 2
        assert f_map(animal_taxonomy, 8) == 7

    def test_vertical_root_maps_to_itself(self, animal_taxonomy):
        assert animal_taxonomy.f_map(9) == 9

    def test_above_verticals(self, animal_taxonomy):
        with pytest.raises(NoVerticalError):
            animal_taxonomy.f_map(1)
        with pytest.raises(NoVerticalError):
            animal_taxonomy.f_map(0)


class TestClassLayout:
    def test_grouped_by_vertical(self, animal_taxonomy):
        layout = class_layout(animal_taxonomy)
        assert layout.order == (4, 5, 6, 8, 10, 11)
        assert layout.ranges == {2: (0, 3), 7: (3, 4), 9: (4, 5), 11: (5, 6)}
        assert layout.class_counts == [3, 1, 1, 1]
        assert layout.vertical_index() == [0, 0, 0, 1, 2, 3]

    def test_two_verticals(self, two_vertical_taxonomy):
        layout = two_vertical_taxonomy.class_layout()
        assert layout.segments == [(0, 3), (3, 5)]
        assert layout.position[6] == 3

    def test_every_leaf_in_exactly_one_range(self, tiny_benchmark):
        tax, _ = tiny_benchmark
        layout = tax.class_layout()
        assert sorted(layout.order) == tax.leaves()
        for leaf in tax.leaves():
            lo, hi = layout.ranges[tax.f_map(leaf)]
            assert lo <= layout.position[leaf] < hi


class TestNavigation:
    def test_subtree_and_leaves(self, animal_taxonomy):
        assert animal_taxonomy.subtree(2) == [2, 3, 4, 5, 6]
        assert animal_taxonomy.vertical_leaves(2) == [4, 5, 6]
        assert animal_taxonomy.ancestors(4) == [3, 2, 1, 0]
        assert animal_taxonomy.children(3) == [4, 5]
        assert animal_taxonomy.class_counts() == {2: 3, 7: 1, 9: 1, 11: 1}
        assert animal_taxonomy.num_classes == 6


class TestValidation:
    def test_duplicate_id(self):
        with pytest.raises(TaxonomyError):
            LabelTaxonomy([TaxonomyNode(id=0, name="a"), TaxonomyNode(id=0, name="b")])

    def test_two_roots(self):
        with pytest.raises(TaxonomyError):
            LabelTaxonomy([TaxonomyNode(id=0, name="a"), TaxonomyNode(id=1, name="b", is_vertical_root=True)])

    def test_unknown_parent(self):
        with pytest.raises(TaxonomyError):
            LabelTaxonomy([TaxonomyNode(id=0, name="a"), TaxonomyNode(id=1, name="b", parent_id=5)])

    def test_cycle(self):
        nodes = [
            TaxonomyNode(id=0, name="root"),
            TaxonomyNode(id=1, name="v", parent_id=0, is_vertical_root=True),
            TaxonomyNode(id=2, name="x", parent_id=3),
            TaxonomyNode(id=3, name="y", parent_id=2),
        ]
        with pytest.raises(TaxonomyError):
            LabelTaxonomy(nodes)

    def test_nested_vertical_roots(self):
        nodes = [
            TaxonomyNode(id=0, name="root"),
            TaxonomyNode(id=1, name="outer", parent_id=0, is_vertical_root=True),
            TaxonomyNode(id=2, name="inner", parent_id=1, is_vertical_root=True),
            TaxonomyNode(id=3, name="leaf", parent_id=2),
        ]
        with pytest.raises(TaxonomyError):
            LabelTaxonomy(nodes)

    def test_leaf_outside_verticals(self):
        nodes = [
            TaxonomyNode(id=0, name="root"),
            TaxonomyNode(id=1, name="v", parent_id=0, is_vertical_root=True),
            TaxonomyNode(id=2, name="leaf", parent_id=1),
            TaxonomyNode(id=3, name="stray", parent_id=0),
        ]
        with pytest.raises(TaxonomyError):
            LabelTaxonomy(nodes)


class TestTaxonomyFile:
    def test_round_trip(self, animal_taxonomy):
        text = dumps_taxonomy(animal_taxonomy)
        again = loads_taxonomy(text)
        assert dumps_taxonomy(again) == text
        assert again.vertical_roots == animal_taxonomy.vertical_roots
        assert again.node(4).name == "golden retriever"
