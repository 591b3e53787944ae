"""Label hierarchy, vertical partition, label smearing and the vertical map."""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from kconc.errors import ContractError, NoVerticalError, TaxonomyError, UnknownLabelError
from kconc.models import SmearedLabel, TaxonomyNode
from kconc.storage import atomic_write_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassLayout:
    """Student class order: grouped by vertical (in vertical-id order), then by class id."""

    order: Tuple[int, ...]
    vertical_ids: Tuple[int, ...]
    ranges: Dict[int, Tuple[int, int]]
    position: Dict[int, int]

    @property
    def num_classes(self) -> int:
        return len(self.order)

    @property
    def segments(self) -> List[Tuple[int, int]]:
        return [self.ranges[v] for v in self.vertical_ids]

    @property
    def class_counts(self) -> List[int]:
        return [hi - lo for lo, hi in self.segments]

    def vertical_index(self) -> List[int]:
        """For each class position, the index of its vertical in ``vertical_ids``."""
        index = []
        for i, (lo, hi) in enumerate(self.segments):
            index.extend([i] * (hi - lo))
        return index


class LabelTaxonomy:
    """A rooted label tree whose vertical roots partition the leaves. Immutable once built."""

    def __init__(self, nodes: Iterable[TaxonomyNode]):
        self._nodes: Dict[int, TaxonomyNode] = {}
        for node in nodes:
            if node.id in self._nodes:
                raise TaxonomyError(f"duplicate label id {node.id}")
            self._nodes[node.id] = node

        self._children: Dict[int, List[int]] = {i: [] for i in self._nodes}
        roots = []
        for node in self._nodes.values():
            if node.parent_id is None:
                roots.append(node.id)
            elif node.parent_id not in self._nodes:
                raise TaxonomyError(f"label {node.id} has unknown parent {node.parent_id}")
            else:
                self._children[node.parent_id].append(node.id)
        if len(roots) != 1:
            raise TaxonomyError(f"taxonomy needs exactly one root, found {len(roots)}")
        self.root_id = roots[0]
        for kids in self._children.values():
            kids.sort()

        self._depth: Dict[int, int] = {}
        stack = [(self.root_id, 0)]
        while stack:
            node_id, depth = stack.pop()
            self._depth[node_id] = depth
            stack.extend((kid, depth + 1) for kid in self._children[node_id])
        if len(self._depth) != len(self._nodes):
            unreachable = sorted(set(self._nodes) - set(self._depth))
            raise TaxonomyError(f"labels not reachable from the root (cycle?): {unreachable}")

        self.vertical_roots: List[int] = sorted(
            n.id for n in self._nodes.values() if n.is_vertical_root
        )
        if not self.vertical_roots:
            raise TaxonomyError("taxonomy has no vertical roots")
        self._vertical: Dict[int, int] = {}
        for v in self.vertical_roots:
            for node_id in self.subtree(v):
                if node_id in self._vertical:
                    raise TaxonomyError(
                        f"label {node_id} lies under vertical roots {self._vertical[node_id]} and {v}"
                    )
                self._vertical[node_id] = v
        orphans = [leaf for leaf in self.leaves() if leaf not in self._vertical]
        if orphans:
            raise TaxonomyError(f"leaves outside every vertical: {orphans}")

    # Navigation
    def __contains__(self, label_id: int) -> bool:
        return label_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def node(self, label_id: int) -> TaxonomyNode:
        try:
            return self._nodes[label_id]
        except KeyError:
            raise UnknownLabelError(f"unknown label id {label_id}") from None

    def nodes(self) -> List[TaxonomyNode]:
        return [self._nodes[i] for i in sorted(self._nodes)]

    def parent(self, label_id: int) -> Optional[int]:
        return self.node(label_id).parent_id

    def children(self, label_id: int) -> List[int]:
        self.node(label_id)
        return list(self._children[label_id])

    def is_leaf(self, label_id: int) -> bool:
        return not self.children(label_id)

    def leaves(self) -> List[int]:
        return sorted(i for i, kids in self._children.items() if not kids)

    def ancestors(self, label_id: int) -> List[int]:
        """Strict ancestors, nearest first."""
        chain = []
        parent = self.parent(label_id)
        while parent is not None:
            chain.append(parent)
            parent = self._nodes[parent].parent_id
        return chain

    def subtree(self, label_id: int) -> List[int]:
        self.node(label_id)
        found, stack = [], [label_id]
        while stack:
            current = stack.pop()
            found.append(current)
            stack.extend(self._children[current])
        return sorted(found)

    def vertical_leaves(self, vertical_id: int) -> List[int]:
        return [i for i in self.subtree(vertical_id) if not self._children[i]]

    def class_counts(self) -> Dict[int, int]:
        return {v: len(self.vertical_leaves(v)) for v in self.vertical_roots}

    @property
    def num_classes(self) -> int:
        return len(self.leaves())

    # Operations
    def smear(
        self, leaf_id: int, include_root: bool = True, sample_id: Optional[int] = None
    ) -> SmearedLabel:
        """Propagate a leaf label's positive to all its ancestors."""
        if not self.is_leaf(leaf_id):
            raise ContractError(f"label {leaf_id} is not a leaf")
        positives = [leaf_id] + self.ancestors(leaf_id)
        if not include_root:
            positives = [p for p in positives if p != self.root_id]
        return SmearedLabel(sample_id=sample_id, leaf_id=leaf_id, positives=sorted(positives))

    def f_map(self, label_id: int) -> int:
        """Vertical root owning ``label_id``; a vertical root maps to itself."""
        self.node(label_id)
        try:
            return self._vertical[label_id]
        except KeyError:
            raise NoVerticalError(f"label {label_id} lies above every vertical root") from None

    def class_layout(self) -> ClassLayout:
        order, ranges = [], {}
        for v in self.vertical_roots:
            start = len(order)
            order.extend(self.vertical_leaves(v))
            ranges[v] = (start, len(order))
        return ClassLayout(
            order=tuple(order),
            vertical_ids=tuple(self.vertical_roots),
            ranges=ranges,
            position={c: i for i, c in enumerate(order)},
        )


# Smearing helpers
def smear(tax: LabelTaxonomy, leaf_id: int, include_root: bool = True) -> SmearedLabel:
    return tax.smear(leaf_id, include_root=include_root)


def f_map(tax: LabelTaxonomy, label_id: int) -> int:
    return tax.f_map(label_id)


def class_layout(tax: LabelTaxonomy) -> ClassLayout:
    return tax.class_layout()


# Taxonomy file (one JSON record per line)
def dumps_taxonomy(tax: LabelTaxonomy) -> str:
    return "".join(json.dumps(n.model_dump(), sort_keys=True) + "\n" for n in tax.nodes())


def loads_taxonomy(text: str) -> LabelTaxonomy:
    nodes = [TaxonomyNode.model_validate_json(line) for line in text.splitlines() if line.strip()]
    return LabelTaxonomy(nodes)


def load_taxonomy(path: Union[str, Path]) -> LabelTaxonomy:
    tax = loads_taxonomy(Path(path).read_text())
    logger.info(f"Loaded taxonomy with {len(tax)} labels, {len(tax.vertical_roots)} verticals")
    return tax


def dump_taxonomy(tax: LabelTaxonomy, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, dumps_taxonomy(tax))
