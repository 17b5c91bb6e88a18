"""Graph ingestion and the column-stochastic transition matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Raised for unparseable edge or label files."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


@dataclass(frozen=True, eq=False)
class Graph:
    """Sparse weighted graph with contiguous integer node ids.

    ``adjacency[i, j]`` is the weight of the edge ``i -> j``.
    """

    adjacency: sp.csr_matrix
    node_names: tuple[str, ...]
    directed: bool = True
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        adj = sp.csr_matrix(self.adjacency, dtype=np.float64)
        adj.sum_duplicates()
        adj.eliminate_zeros()
        adj.sort_indices()
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise ValueError(f"adjacency must be square, got {adj.shape}")
        if len(self.node_names) != n:
            raise ValueError("node_names length does not match adjacency size")
        if adj.nnz and adj.data.min() <= 0:
            raise ValueError("edge weights must be positive")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "node_names", tuple(str(x) for x in self.node_names))
        index = {name: i for i, name in enumerate(self.node_names)}
        if len(index) != n:
            raise ValueError("node names must be unique")
        object.__setattr__(self, "_index", index)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown node {name!r}") from None

    def indices_of(self, names: Iterable[str]) -> np.ndarray:
        return np.array([self.index_of(n) for n in names], dtype=np.int64)

    @classmethod
    def from_adjacency(cls, adjacency, node_names=None, directed=True) -> "Graph":
        adj = sp.csr_matrix(adjacency, dtype=np.float64)
        if node_names is None:
            node_names = [str(i) for i in range(adj.shape[0])]
        return cls(adj, tuple(node_names), directed)

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel so that old node ``i`` becomes new node ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        adj = self.adjacency[inv][:, inv]
        names = [self.node_names[i] for i in inv]
        return Graph(sp.csr_matrix(adj), tuple(names), self.directed)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """``matrix[i, j] = w(j -> i) / outdeg(j)``; dangling columns are zero."""

    matrix: sp.csr_matrix
    dangling: frozenset

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """Binary node-by-class indicator matrix (multi-label allowed)."""

    matrix: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2:
            raise ValueError("label matrix must be 2-D")
        if not np.isin(m, (0, 1)).all():
            raise ValueError("label matrix entries must be 0 or 1")
        if m.shape[1] != len(self.class_names):
            raise ValueError("class_names length does not match label columns")
        m = m.astype(np.int8)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[1]

    @property
    def labeled(self) -> np.ndarray:
        """Indices of nodes carrying at least one label."""
        return np.flatnonzero(self.matrix.sum(axis=1) > 0)

    def counts(self) -> np.ndarray:
        return self.matrix.sum(axis=1).astype(np.int64)

    @classmethod
    def from_classes(cls, classes, n_classes=None) -> "LabelMatrix":
        """Build a single-label indicator matrix from an integer class vector."""
        classes = np.asarray(classes, dtype=np.int64)
        if n_classes is None:
            n_classes = int(classes.max()) + 1 if classes.size else 0
        m = np.zeros((classes.size, n_classes), dtype=np.int8)
        m[np.arange(classes.size), classes] = 1
        return cls(m, tuple(str(c) for c in range(n_classes)))


def _split(line: str) -> list[str]:
    return line.split("\t") if "\t" in line else line.split()


def load_edge_list(path, directed: bool = False, weighted: bool = True) -> Graph:
    """Parse a ``src dst [weight]`` edge list.

    Node ids are assigned in first-seen order. Duplicate edges are merged by
    summing weights. With ``weighted=False`` a third column is ignored.
    """
    path = Path(path)
    names: dict[str, int] = {}
    rows, cols, vals = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in _split(line) if p.strip()]
            if len(parts) not in (2, 3):
                raise GraphFormatError(
                    f"expected 'src dst [weight]', got {len(parts)} fields", path, lineno
                )
            w = 1.0
            if len(parts) == 3 and weighted:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise GraphFormatError(f"bad weight {parts[2]!r}", path, lineno) from None
                if not np.isfinite(w) or w <= 0:
                    raise GraphFormatError(f"weight must be positive, got {parts[2]}", path, lineno)
            src = names.setdefault(parts[0], len(names))
            dst = names.setdefault(parts[1], len(names))
            rows.append(src)
            cols.append(dst)
            vals.append(w)
            if not directed and src != dst:
                rows.append(dst)
                cols.append(src)
                vals.append(w)
    if not names:
        raise GraphFormatError("edge list contains no edges", path)
    n = len(names)
    adj = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    logger.debug("loaded %s: %d nodes, %d edges", path, n, adj.nnz)
    return Graph(adj, tuple(names), directed)


def write_edge_list(graph: Graph, path) -> None:
    """Write a graph so that :func:`load_edge_list` restores the same adjacency."""
    adj = graph.adjacency.tocoo()
    names = graph.node_names
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, w in zip(adj.row, adj.col, adj.data):
            if not graph.directed and j < i:
                continue
            fh.write(f"{names[i]}\t{names[j]}\t{float(w)!r}\n")


def write_node_map(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, name in enumerate(graph.node_names):
            fh.write(f"{i}\t{name}\n")


def load_labels(path, graph: Graph) -> LabelMatrix:
    """Read ``node_id<TAB>label1,label2,...`` lines into a :class:`LabelMatrix`.

    Classes are numbered in first-seen order. Nodes missing from the file are
    left unlabeled; ids not in the graph are skipped with a warning.
    """
    path = Path(path)
    classes: dict[str, int] = {}
    assignments: list[tuple[int, list[int]]] = []
    unknown = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = _split(line)
            if len(parts) != 2:
                raise GraphFormatError("expected 'node_id<TAB>labels'", path, lineno)
            node, labels = parts[0].strip(), parts[1].strip()
            ids = [classes.setdefault(lab.strip(), len(classes)) for lab in labels.split(",") if lab.strip()]
            if node not in graph._index:
                unknown += 1
                continue
            assignments.append((graph.index_of(node), ids))
    if unknown:
        logger.warning("%s: skipped %d labels for nodes absent from the graph", path, unknown)
    m = np.zeros((graph.n_nodes, len(classes)), dtype=np.int8)
    for node, ids in assignments:
        m[node, ids] = 1
    return LabelMatrix(m, tuple(classes))


def to_transition(graph: Graph) -> TransitionMatrix:
    adj = graph.adjacency
    outdeg = np.asarray(adj.sum(axis=1)).ravel()
    dangling = np.flatnonzero(outdeg == 0)
    inv = np.zeros_like(outdeg)
    nz = outdeg > 0
    inv[nz] = 1.0 / outdeg[nz]
    T = (sp.diags(inv) @ adj).T.tocsr()
    T.sort_indices()
    return TransitionMatrix(T, frozenset(int(d) for d in dangling))


def induced_subgraph(matrix: TransitionMatrix, keep) -> tuple[TransitionMatrix, np.ndarray]:
    """Restrict to ``keep`` without renormalizing columns.

    Returns the reduced matrix and the array mapping reduced indices back to
    original ones.
    """
    keep = np.unique(np.asarray(list(keep), dtype=np.int64))
    if keep.size == 0:
        raise ValueError("keep set is empty")
    if keep[0] < 0 or keep[-1] >= matrix.n_nodes:
        raise IndexError("keep contains out-of-range node indices")
    sub = matrix.matrix[keep][:, keep].tocsr()
    sub.sort_indices()
    back = {int(j) for j in matrix.dangling}
    dangling = frozenset(i for i, orig in enumerate(keep) if orig in back)
    return TransitionMatrix(sub, dangling), keep
