from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.config import ROOT_TOKEN
from core.exceptions import DataError, ShapeError, TaxonomyError
from core.logger import get_logger
from core.utils import sha256_text

logger = get_logger(__name__, log_file="taxonomy.log")

# A LabelVector is a length-n int8 array of 0/1 flags aligned to Taxonomy.labels.
LabelVector = np.ndarray


class Taxonomy:
    """
    The label hierarchy: a tree under an implicit root that is not itself a label.

    Labels are indexed 0..n-1 in definition order. Depth of a root child is 1.
    Instances are immutable after construction and may be shared between workers.
    """

    def __init__(self, labels: Sequence[str], parents: Dict[str, Optional[str]]):
        """
        :param labels: Label identifiers in index order.
        :param parents: Map label -> parent label, or None for children of the root.
        """
        if len(labels) == 0:
            raise TaxonomyError("taxonomy has no labels")
        if len(set(labels)) != len(labels):
            raise TaxonomyError("duplicate label identifiers")

        self._labels: Tuple[str, ...] = tuple(labels)
        self._index: Dict[str, int] = {label: i for i, label in enumerate(self._labels)}

        parent_index = np.full(len(self._labels), -1, dtype=np.int64)
        for label in self._labels:
            parent = parents.get(label)
            if parent is None:
                continue
            if parent not in self._index:
                raise TaxonomyError(f"orphan label '{label}': parent '{parent}' is never defined")
            parent_index[self._index[label]] = self._index[parent]
        self._parent_index = parent_index
        self._parent_index.setflags(write=False)

        self._depth = self._compute_depths()
        self._depth.setflags(write=False)
        self._children: Tuple[Tuple[int, ...], ...] = tuple(
            tuple(int(c) for c in np.flatnonzero(self._parent_index == i)) for i in range(self.n)
        )

    def _compute_depths(self) -> np.ndarray:
        depth = np.zeros(self.n, dtype=np.int64)
        for start in range(self.n):
            if depth[start]:
                continue
            chain = []
            seen = set()
            node = start
            while node != -1 and depth[node] == 0:
                if node in seen:
                    raise TaxonomyError(f"cycle detected through label '{self._labels[node]}'")
                seen.add(node)
                chain.append(node)
                node = int(self._parent_index[node])
            base = 0 if node == -1 else int(depth[node])
            for offset, member in enumerate(reversed(chain), start=1):
                depth[member] = base + offset
        return depth

    @property
    def labels(self) -> Tuple[str, ...]:
        return self._labels

    @property
    def n(self) -> int:
        return len(self._labels)

    @property
    def depths(self) -> np.ndarray:
        """Per-label level, aligned to `labels` (read-only)."""
        return self._depth

    @property
    def parent_index(self) -> np.ndarray:
        """Per-label parent index, -1 for root children (read-only)."""
        return self._parent_index

    @property
    def max_depth(self) -> int:
        return int(self._depth.max())

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise TaxonomyError(f"unknown label '{label}'")

    def depth(self, label: str) -> int:
        return int(self._depth[self.index(label)])

    def parent(self, label: str) -> Optional[str]:
        p = int(self._parent_index[self.index(label)])
        return None if p == -1 else self._labels[p]

    def children(self, label: str) -> List[str]:
        return [self._labels[c] for c in self._children[self.index(label)]]

    def ancestors(self, label: str) -> List[str]:
        """
        Chain from the level-1 ancestor down to the label's parent.

        :param label: Label identifier.
        :return: Ancestor labels top-down; empty for level-1 labels.
        """
        return [self._labels[i] for i in self.ancestor_indices(self.index(label))]

    def ancestor_indices(self, k: int) -> List[int]:
        chain = []
        p = int(self._parent_index[k])
        while p != -1:
            chain.append(p)
            p = int(self._parent_index[p])
        chain.reverse()
        return chain

    def vector(self, labels: Iterable[str]) -> LabelVector:
        bits = np.zeros(self.n, dtype=np.int8)
        for label in labels:
            bits[self.index(label)] = 1
        return bits

    def names(self, bits: LabelVector) -> List[str]:
        bits = self.check_vector(bits)
        return [self._labels[i] for i in np.flatnonzero(bits)]

    def check_vector(self, bits) -> LabelVector:
        bits = np.asarray(bits)
        if bits.shape != (self.n,):
            raise ShapeError("label_vector", bits.shape, (self.n,))
        if np.any((bits != 0) & (bits != 1)):
            raise DataError("label vector must be binary")
        return bits.astype(np.int8, copy=False)

    def is_closed(self, bits: LabelVector) -> bool:
        bits = self.check_vector(bits)
        active = bits == 1
        parents = self._parent_index[active]
        parents = parents[parents != -1]
        return bool(np.all(bits[parents] == 1))

    def closure(self, bits: LabelVector) -> LabelVector:
        """Add every ancestor of every active label."""
        bits = self.check_vector(bits).copy()
        for k in np.flatnonzero(bits):
            for a in self.ancestor_indices(int(k)):
                bits[a] = 1
        return bits

    def leaves_of(self, bits: LabelVector) -> List[int]:
        """Active labels none of whose children are active."""
        bits = self.check_vector(bits)
        leaves = []
        for k in np.flatnonzero(bits):
            if not any(bits[c] for c in self._children[int(k)]):
                leaves.append(int(k))
        return leaves

    def decompose_paths(self, bits: LabelVector) -> List[Tuple[int, ...]]:
        """
        Split an ancestor-closed label set into one full chain per induced leaf.

        Chains share their common prefixes, so the result is a cover of the set,
        not a disjoint partition. Each chain lists label indices top-down.

        :param bits: Ancestor-closed LabelVector.
        :return: One tuple per leaf of the induced subtree, ordered by leaf index.
        """
        bits = self.check_vector(bits)
        if not self.is_closed(bits):
            raise DataError("label set is not ancestor-closed; cannot decompose into paths")
        return [tuple(self.ancestor_indices(leaf) + [leaf]) for leaf in self.leaves_of(bits)]

    def count_paths(self, bits: LabelVector, require_closed: bool = True) -> int:
        if require_closed:
            return len(self.decompose_paths(bits))
        return len(self.leaves_of(bits))

    def path_names(self, paths: Sequence[Sequence[int]]) -> List[List[str]]:
        return [[self._labels[i] for i in path] for path in paths]

    def labels_at_level(self, level: int) -> List[int]:
        return [int(i) for i in np.flatnonzero(self._depth == level)]

    def to_tsv(self) -> str:
        lines = []
        for i, label in enumerate(self._labels):
            p = int(self._parent_index[i])
            lines.append(f"{label}\t{ROOT_TOKEN if p == -1 else self._labels[p]}")
        return "\n".join(lines) + "\n"

    @property
    def content_hash(self) -> str:
        return sha256_text(self.to_tsv())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Taxonomy)
            and self._labels == other._labels
            and np.array_equal(self._parent_index, other._parent_index)
        )

    def __hash__(self) -> int:
        return hash(self.content_hash)

    def __repr__(self) -> str:
        return f"Taxonomy(n={self.n}, max_depth={self.max_depth})"
