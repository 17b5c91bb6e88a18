from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from deepnoderank.graph import Graph


def dense_ppr_oracle(adjacency, seed, damping, eps=1e-12, max_iter=1_000_000):
    """Shrink-free dense power iteration.

    Dangling columns are redirected to the seed inside the matrix itself, so
    the iteration is the plain ``r <- d M r + (1 - d) e``.
    """
    A = np.asarray(adjacency.toarray() if sp.issparse(adjacency) else adjacency, dtype=float)
    n = A.shape[0]
    out = A.sum(axis=1)
    M = np.zeros((n, n))
    for j in range(n):
        if out[j] > 0:
            M[:, j] = A[j, :] / out[j]
        else:
            M[seed, j] = 1.0
    e = np.zeros(n)
    e[seed] = 1.0
    r = e.copy()
    for _ in range(max_iter):
        new = damping * (M @ r) + (1 - damping) * e
        if np.abs(new - r).sum() <= eps:
            return new
        r = new
    raise AssertionError("oracle did not converge")


def dense_ppr_solve(adjacency, seed, damping):
    """Closed form ``(1 - d) (I - d M)^-1 e`` with the same dangling rule."""
    A = np.asarray(adjacency.toarray() if sp.issparse(adjacency) else adjacency, dtype=float)
    n = A.shape[0]
    out = A.sum(axis=1)
    M = np.zeros((n, n))
    for j in range(n):
        if out[j] > 0:
            M[:, j] = A[j, :] / out[j]
        else:
            M[seed, j] = 1.0
    e = np.zeros(n)
    e[seed] = 1.0
    return np.linalg.solve(np.eye(n) - damping * M, (1 - damping) * e)


def f1_oracle(predicted, truth):
    """Micro and macro F1 by explicit loops over nodes and classes, in exact arithmetic."""
    n, C = len(truth), len(truth[0])
    per_class = []
    TP = FP = FN = 0
    for c in range(C):
        tp = fp = fn = 0
        for i in range(n):
            p, t = bool(predicted[i][c]), bool(truth[i][c])
            tp += p and t
            fp += p and not t
            fn += t and not p
        TP, FP, FN = TP + tp, FP + fp, FN + fn
        per_class.append(_f1_from_counts(tp, fp, fn))
    return float(_f1_from_counts(TP, FP, FN)), float(sum(per_class, Fraction(0)) / C)


def _f1_from_counts(tp, fp, fn):
    precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def multi_component_graph(seed, n_components=3, size_range=(3, 12), p=0.4, dangling=True):
    """Disjoint directed random components, optionally with extra sink nodes."""
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(n_components):
        k = int(rng.integers(*size_range))
        B = (rng.random((k, k)) < p).astype(float)
        np.fill_diagonal(B, 0)
        if dangling:
            B[rng.integers(k), :] = 0
        blocks.append(B * rng.uniform(0.5, 2.0, size=(k, k)))
    A = sp.block_diag(blocks).tocsr()
    return Graph.from_adjacency(A)


@pytest.fixture
def cycle2():
    return Graph.from_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]), ["a", "b"])


@pytest.fixture
def write_file(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
