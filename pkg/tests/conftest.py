import pytest

from kconc.datasets import generate_synthetic
from kconc.models import ArchSizes, SyntheticSpec, TaxonomyNode, TrainConfig
from kconc.taxonomy import LabelTaxonomy


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run the seeded trend checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="trend check, pass --run-slow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def animal_taxonomy():
    """entity > animal > mammal (vertical) > dog > golden retriever, plus three small verticals."""
    return LabelTaxonomy(
        [
            TaxonomyNode(id=0, name="entity"),
            TaxonomyNode(id=1, name="animal", parent_id=0),
            TaxonomyNode(id=2, name="mammal", parent_id=1, is_vertical_root=True),
            TaxonomyNode(id=3, name="dog", parent_id=2),
            TaxonomyNode(id=4, name="golden retriever", parent_id=3),
            TaxonomyNode(id=5, name="labrador", parent_id=3),
            TaxonomyNode(id=6, name="cat", parent_id=2),
            TaxonomyNode(id=7, name="bird", parent_id=1, is_vertical_root=True),
            TaxonomyNode(id=8, name="sparrow", parent_id=7),
            TaxonomyNode(id=9, name="vehicle", parent_id=0, is_vertical_root=True),
            TaxonomyNode(id=10, name="car", parent_id=9),
            TaxonomyNode(id=11, name="misc", parent_id=0, is_vertical_root=True),
        ]
    )


@pytest.fixture
def two_vertical_taxonomy():
    """root 0; vertical 1 with leaves 3, 4, 5; vertical 2 with leaves 6, 7."""
    return LabelTaxonomy(
        [
            TaxonomyNode(id=0, name="root"),
            TaxonomyNode(id=1, name="cars", parent_id=0, is_vertical_root=True),
            TaxonomyNode(id=2, name="food", parent_id=0, is_vertical_root=True),
            TaxonomyNode(id=3, name="sedan", parent_id=1),
            TaxonomyNode(id=4, name="coupe", parent_id=1),
            TaxonomyNode(id=5, name="truck", parent_id=1),
            TaxonomyNode(id=6, name="pasta", parent_id=2),
            TaxonomyNode(id=7, name="salad", parent_id=2),
        ]
    )


@pytest.fixture
def tiny_spec():
    return SyntheticSpec(
        num_verticals=2,
        leaves_per_vertical=4,
        leaves_per_group=2,
        d_in=6,
        train_per_class=6,
        test_per_class=3,
        confusability=0.3,
        seed=0,
    )


@pytest.fixture
def tiny_benchmark(tiny_spec):
    return generate_synthetic(tiny_spec)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(
        k=3,
        batch_size=8,
        learning_rate=0.05,
        epochs=20,
        seed=3,
        arch=ArchSizes(base_hidden=8, s_b=8, s1=6, s2=4),
        teacher_arch=ArchSizes(base_hidden=8, s_b=8, s1=8, s2=8),
    )
