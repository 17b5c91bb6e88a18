"""Seeded synthetic graphs."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graph import Graph, LabelMatrix


def planted_partition(n_blocks=2, block_size=50, p_in=0.3, p_out=0.02, seed=0):
    """Undirected stochastic block model with one label per block."""
    rng = np.random.default_rng(seed)
    n = n_blocks * block_size
    block = np.repeat(np.arange(n_blocks), block_size)
    probs = np.where(block[:, None] == block[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    adj = (upper | upper.T).astype(np.float64)
    graph = Graph.from_adjacency(sp.csr_matrix(adj), directed=False)
    return graph, LabelMatrix.from_classes(block, n_blocks)


def erdos_renyi(n, p, seed=0, directed=True, weighted=False):
    """G(n, p) without self-loops; optional uniform(0.5, 2) weights."""
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    if not directed:
        mask = np.triu(mask, k=1)
        mask = mask | mask.T
    adj = mask.astype(np.float64)
    if weighted:
        w = rng.uniform(0.5, 2.0, size=(n, n))
        if not directed:
            w = np.triu(w, 1) + np.triu(w, 1).T
        adj *= w
    return Graph.from_adjacency(sp.csr_matrix(adj), directed=directed)
