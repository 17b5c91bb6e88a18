"""Input coercion helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_array

from .graph import Graph, LabelMatrix


def check_graph(X) -> Graph:
    """Accept a :class:`Graph`, a sparse matrix or a dense square array."""
    if isinstance(X, Graph):
        return X
    A = check_array(X, accept_sparse="csr", dtype=np.float64, ensure_min_samples=1)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got shape {A.shape}")
    if sp.issparse(A):
        if A.nnz and A.data.min() < 0:
            raise ValueError("adjacency weights must be nonnegative")
    elif (A < 0).any():
        raise ValueError("adjacency weights must be nonnegative")
    return Graph.from_adjacency(A)


def check_labels(Y, n_nodes: int) -> LabelMatrix:
    """Accept a :class:`LabelMatrix`, an indicator matrix or a 1-D class vector."""
    if isinstance(Y, LabelMatrix):
        labels = Y
    else:
        Y = np.asarray(Y.toarray() if sp.issparse(Y) else Y)
        if Y.ndim == 1:
            labels = LabelMatrix.from_classes(Y)
        else:
            labels = LabelMatrix(Y, tuple(str(c) for c in range(Y.shape[1])))
    if labels.n_nodes != n_nodes:
        raise ValueError(f"labels cover {labels.n_nodes} nodes but the graph has {n_nodes}")
    return labels


def check_nodes(nodes, n_nodes: int) -> np.ndarray:
    """Node index array; ``None`` means every node."""
    if nodes is None:
        return np.arange(n_nodes)
    nodes = np.asarray(nodes)
    if nodes.dtype == bool:
        if nodes.shape != (n_nodes,):
            raise ValueError("boolean node mask has the wrong length")
        return np.flatnonzero(nodes)
    nodes = nodes.astype(np.int64, casting="safe") if nodes.size else nodes.astype(np.int64)
    if nodes.ndim != 1:
        raise ValueError("node indices must be 1-D")
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n_nodes):
        raise IndexError(f"node indices must lie in [0, {n_nodes})")
    return nodes
