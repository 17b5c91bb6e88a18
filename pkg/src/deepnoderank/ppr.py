"""Personalized PageRank with shrinking.

A probe first expands the seed's reachable set; when that set stabilizes
while still small, the power iteration runs on the induced submatrix only
and the result is scattered back to full length.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import defaults
from .graph import TransitionMatrix, induced_subgraph, to_transition
from .validation import check_graph, check_nodes

logger = logging.getLogger(__name__)


class PPRError(RuntimeError):
    """A rank computation failed for a specific seed."""

    def __init__(self, seed, cause):
        self.seed = seed
        super().__init__(f"P-PR failed for seed {seed}: {cause}")


@dataclass(frozen=True)
class PPRConfig:
    damping: float = defaults.DAMPING
    epsilon: float = defaults.EPSILON
    max_steps: int = defaults.MAX_STEPS
    spread_step: int = defaults.SPREAD_STEP
    spread_percent: float = defaults.SPREAD_PERCENT
    norm: str = defaults.NORM
    shrink: bool = True

    def __post_init__(self):
        if not 0 < self.damping < 1:
            raise ValueError(f"damping must be in (0, 1), got {self.damping}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.spread_step < 1:
            raise ValueError(f"spread_step must be >= 1, got {self.spread_step}")
        if not 0 < self.spread_percent <= 1:
            raise ValueError(f"spread_percent must be in (0, 1], got {self.spread_percent}")
        if self.norm not in ("l1", "l2"):
            raise ValueError(f"norm must be 'l1' or 'l2', got {self.norm!r}")


@dataclass
class PPRVector:
    seed: int
    values: np.ndarray
    iterations_used: int
    shrunk: bool
    reduced_size: int
    converged: bool
    residuals: list = field(default_factory=list, repr=False)


def shrink_probe(T: TransitionMatrix, seed: int, cfg: PPRConfig = PPRConfig()):
    """Return the seed's reachable node set if it is small, else ``None``.

    The nonzero pattern of ``v <- v + T v`` is expanded for at most
    ``spread_step`` steps. A pattern that stops growing before reaching
    ``spread_percent * n`` nodes is the full reachable set.
    """
    n = T.n_nodes
    if not 0 <= seed < n:
        raise IndexError(f"seed {seed} out of range for {n} nodes")
    # boolean propagation over the sparsity pattern; only reachability matters
    pattern = T.matrix.copy()
    pattern.data = np.ones_like(pattern.data)
    mask = np.zeros(n, dtype=bool)
    mask[seed] = True
    nz = 1
    limit = n * cfg.spread_percent
    steps = 0
    while nz < limit and steps < cfg.spread_step:
        steps += 1
        mask = mask | (pattern @ mask.astype(np.float64) > 0)
        nzn = int(mask.sum())
        if nzn == nz:
            return np.flatnonzero(mask)
        nz = nzn
    return None


def _norm(x: np.ndarray, kind: str) -> float:
    if kind == "l1":
        return float(np.abs(x).sum())
    return float(np.sqrt(np.dot(x, x)))


def _iterate(M: sp.csr_matrix, seed: int, cfg: PPRConfig):
    n = M.shape[0]
    delta = cfg.damping
    rank = np.zeros(n)
    rank[seed] = 1.0
    residuals = []
    converged = False
    steps = 0
    while steps < cfg.max_steps:
        steps += 1
        new = M @ rank
        mass = new.sum()
        if mass < 1.0:
            # mass lost through dangling nodes goes back to the seed
            new[seed] += 1.0 - mass
        new *= delta
        new[seed] += 1.0 - delta
        diff = _norm(rank - new, cfg.norm)
        residuals.append(diff)
        rank = new
        if diff <= cfg.epsilon:
            converged = True
            break
    return rank, steps, converged, residuals


def ppr(T: TransitionMatrix, seed: int, cfg: PPRConfig = PPRConfig()) -> PPRVector:
    """Personalized PageRank vector of ``seed``."""
    n = T.n_nodes
    seed = int(seed)
    if not 0 <= seed < n:
        raise IndexError(f"seed {seed} out of range for {n} nodes")
    keep = shrink_probe(T, seed, cfg) if cfg.shrink else None
    if keep is not None:
        sub, back = induced_subgraph(T, keep)
        local = int(np.searchsorted(back, seed))
        rank, steps, converged, residuals = _iterate(sub.matrix, local, cfg)
        values = np.zeros(n)
        values[back] = rank
        reduced = len(back)
    else:
        values, steps, converged, residuals = _iterate(T.matrix, seed, cfg)
        reduced = n
    if not converged:
        logger.warning("P-PR for seed %d did not converge in %d steps", seed, steps)
    return PPRVector(seed, values, steps, keep is not None, reduced, converged, residuals)


def ppr_batch(T: TransitionMatrix, seeds: Sequence[int], cfg: PPRConfig = PPRConfig(),
              n_jobs: int = 1) -> list[PPRVector]:
    """Rank vectors for ``seeds``, returned in input order."""
    seeds = [int(s) for s in seeds]

    def one(s):
        try:
            return ppr(T, s, cfg)
        except Exception as exc:
            raise PPRError(s, exc) from exc

    if n_jobs == 1 or len(seeds) < 2:
        return [one(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(one, seeds))


def ppr_matrix(T: TransitionMatrix, seeds: Sequence[int], cfg: PPRConfig = PPRConfig(),
               n_jobs: int = 1) -> sp.csr_matrix:
    """Stack rank vectors for ``seeds`` into a sparse ``len(seeds) x n`` matrix."""
    vecs = ppr_batch(T, seeds, cfg, n_jobs)
    if not vecs:
        return sp.csr_matrix((0, T.n_nodes))
    return sp.csr_matrix(np.vstack([v.values for v in vecs]))


class PersonalizedPageRank(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Map node indices to their personalized PageRank vectors.

    ``fit`` takes a :class:`Graph` or a square adjacency matrix (row = source);
    ``transform`` takes an array of node indices and returns a dense
    ``(len(nodes), n_nodes)`` array.
    """

    def __init__(self, damping=defaults.DAMPING, epsilon=defaults.EPSILON,
                 max_steps=defaults.MAX_STEPS, spread_step=defaults.SPREAD_STEP,
                 spread_percent=defaults.SPREAD_PERCENT, norm=defaults.NORM,
                 shrink=True, n_jobs=1):
        self.damping = damping
        self.epsilon = epsilon
        self.max_steps = max_steps
        self.spread_step = spread_step
        self.spread_percent = spread_percent
        self.norm = norm
        self.shrink = shrink
        self.n_jobs = n_jobs

    def _config(self) -> PPRConfig:
        return PPRConfig(self.damping, self.epsilon, self.max_steps, self.spread_step,
                         self.spread_percent, self.norm, self.shrink)

    def fit(self, X, y=None):
        graph = check_graph(X)
        self.config_ = self._config()
        self.transition_ = to_transition(graph)
        self.n_nodes_ = graph.n_nodes
        return self

    def transform(self, X=None):
        check_is_fitted(self, "transition_")
        nodes = check_nodes(X, self.n_nodes_)
        return ppr_matrix(self.transition_, nodes, self.config_, self.n_jobs).toarray()

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(None)
