"""Node classification protocol: logistic regression over embeddings, top-k
decisions, micro/macro F1 and train-fraction sweeps."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import defaults
from .dnr import TrainConfig, classify_e2e, embed, train
from .graph import Graph, LabelMatrix
from .seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

PIPELINES = ("dnr-embed", "dnr-e2e", "embedding-file")


# logistic regression

@dataclass
class LogRegParams:
    coef: np.ndarray  # (n_features, n_classes)
    intercept: np.ndarray  # (n_classes,)
    constant: np.ndarray  # classes without both positive and negative examples
    prior: np.ndarray
    n_iter: int
    grad_norm: float

    @property
    def degenerate_classes(self) -> np.ndarray:
        return np.flatnonzero(self.constant)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        p = expit(X @ self.coef + self.intercept)
        return np.where(self.constant, self.prior, p)


def train_logreg(X, Y, train_idx=None, l2_lambda=defaults.L2_LAMBDA, tol=defaults.LOGREG_TOL,
                 max_iter=defaults.LOGREG_MAX_ITER) -> LogRegParams:
    """One-vs-rest logistic regression by full-batch gradient descent.

    Each class minimizes mean binary cross-entropy plus
    ``l2_lambda / 2 * ||w||^2`` (intercept unpenalized). Iteration stops when
    every class gradient has Euclidean norm ``<= tol`` or after ``max_iter``
    steps. Classes whose training targets are all 0 or all 1 fall back to the
    constant prior.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y.matrix if isinstance(Y, LabelMatrix) else Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if train_idx is not None:
        X, Y = X[train_idx], Y[train_idx]
    n, d = X.shape
    if n == 0:
        raise ValueError("no training rows")
    prior = Y.mean(axis=0)
    constant = (prior == 0) | (prior == 1)
    if constant.any():
        logger.warning("classes %s have no positive or no negative training examples; using the prior",
                       np.flatnonzero(constant).tolist())

    C = Y.shape[1]
    W = np.zeros((d, C))
    b = np.zeros(C)
    # Lipschitz bound of the mean logistic loss gradient (intercept column included)
    Xb = np.hstack([X, np.ones((n, 1))])
    smax = np.linalg.norm(Xb, 2) if n and d else 1.0
    step = 1.0 / (0.25 * smax * smax / n + l2_lambda)
    active = ~constant
    gnorm = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        R = (expit(X @ W + b) - Y) / n
        gW = X.T @ R + l2_lambda * W
        gb = R.sum(axis=0)
        norms = np.sqrt((gW * gW).sum(axis=0) + gb * gb)
        gnorm = float(norms[active].max()) if active.any() else 0.0
        if gnorm <= tol:
            break
        W -= step * gW
        b -= step * gb
    W[:, constant] = 0.0
    b[constant] = 0.0
    return LogRegParams(W, b, constant, prior, it, gnorm)


def predict_topk(proba, counts) -> np.ndarray:
    """Predict the ``counts[i]`` most probable classes for each row.

    Ties go to the lower class index.
    """
    proba = np.asarray(proba, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    n, C = proba.shape
    if counts.shape != (n,):
        raise ValueError("need one label count per row")
    if (counts > C).any():
        raise ValueError(f"label count exceeds the {C} available classes")
    if (counts < 0).any():
        raise ValueError("label counts must be nonnegative")
    order = np.argsort(-proba, axis=1, kind="stable")
    out = np.zeros((n, C), dtype=np.int8)
    for i in range(n):
        out[i, order[i, : counts[i]]] = 1
    return out


def _f1(tp: int, fp: int, fn: int) -> Fraction:
    # 2PR / (P + R) reduces to 2tp / (2tp + fp + fn); kept rational so rounding happens once
    if tp == 0:
        return Fraction(0)
    return Fraction(2 * tp, 2 * tp + fp + fn)


def micro_macro_f1(predicted, truth) -> tuple[float, float]:
    """Micro F1 from pooled counts and macro F1 as the mean over all classes.

    Both are exact rationals rounded once to the nearest float.

    A class with no true positives, false positives or false negatives
    contributes 0 to the macro mean.
    """
    P = np.asarray(predicted.matrix if isinstance(predicted, LabelMatrix) else predicted).astype(bool)
    T = np.asarray(truth.matrix if isinstance(truth, LabelMatrix) else truth).astype(bool)
    if P.shape != T.shape:
        raise ValueError(f"shape mismatch: predicted {P.shape}, truth {T.shape}")
    tp = (P & T).sum(axis=0)
    fp = (P & ~T).sum(axis=0)
    fn = (~P & T).sum(axis=0)
    per_class = [_f1(int(a), int(b), int(c)) for a, b, c in zip(tp, fp, fn)]
    macro = float(sum(per_class) / len(per_class)) if per_class else 0.0
    micro = float(_f1(int(tp.sum()), int(fp.sum()), int(fn.sum())))
    return micro, macro


def random_label_baseline(labels: LabelMatrix, train_idx, test_idx, seed=0) -> np.ndarray:
    """Draw each test node's labels at random, weighted by training class frequency."""
    rng = rng_for(seed, "random-baseline")
    freq = labels.matrix[train_idx].sum(axis=0).astype(np.float64) + 1e-12
    freq /= freq.sum()
    counts = labels.counts()[test_idx]
    out = np.zeros((len(test_idx), labels.n_classes), dtype=np.int8)
    for i, k in enumerate(counts):
        out[i, rng.choice(labels.n_classes, size=int(k), replace=False, p=freq)] = 1
    return out


class OneVsRestLogisticRegression(ClassifierMixin, BaseEstimator):
    """L2-regularized one-vs-rest logistic regression (full-batch, deterministic).

    ``y`` may be a 1-D class vector or a binary indicator matrix.
    """

    def __init__(self, l2_lambda=defaults.L2_LAMBDA, tol=defaults.LOGREG_TOL,
                 max_iter=defaults.LOGREG_MAX_ITER):
        self.l2_lambda = l2_lambda
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if y.ndim == 1:
            self.classes_, codes = np.unique(y, return_inverse=True)
            Y = np.zeros((y.size, self.classes_.size))
            Y[np.arange(y.size), codes] = 1
            self.multilabel_ = False
        else:
            Y = y
            self.classes_ = np.arange(y.shape[1])
            self.multilabel_ = True
        if Y.shape[0] != X.shape[0]:
            raise ValueError("X and y have different numbers of rows")
        self.params_ = train_logreg(X, Y, None, self.l2_lambda, self.tol, self.max_iter)
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = self.params_.n_iter
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return self.params_.predict_proba(check_array(X, dtype=np.float64))

    def predict(self, X):
        proba = self.predict_proba(X)
        if self.multilabel_:
            return (proba >= 0.5).astype(np.int8)
        return self.classes_[np.argmax(proba, axis=1)]

    def predict_topk(self, X, counts):
        return predict_topk(self.predict_proba(X), counts)


# protocol

@dataclass(frozen=True)
class EvalProtocol:
    construction_fraction: float = defaults.CONSTRUCTION_FRACTION
    train_fractions: tuple = defaults.TRAIN_FRACTIONS
    repeats: int = defaults.REPEATS
    l2_lambda: float = defaults.L2_LAMBDA
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "train_fractions", tuple(float(f) for f in self.train_fractions))
        for f in self.train_fractions + (self.construction_fraction,):
            if not 0 < f < 1:
                raise ValueError(f"fractions must lie in (0, 1), got {f}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class Pipeline:
    """What produces node representations: DNR (embedding or end-to-end) or a fixed matrix."""

    kind: str = "dnr-embed"
    train_config: TrainConfig = field(default_factory=TrainConfig)
    embeddings: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}, got {self.kind!r}")
        if self.kind == "embedding-file" and self.embeddings is None:
            raise ValueError("embedding-file pipeline needs an embedding matrix")
        if self.kind == "dnr-e2e" and self.train_config.mode != "end_to_end":
            self.train_config = replace(self.train_config, mode="end_to_end")
        if self.kind == "dnr-embed" and self.train_config.mode == "end_to_end":
            self.train_config = replace(self.train_config, mode="supervised_embed")

    @property
    def uses_construction(self) -> bool:
        if self.kind == "dnr-e2e":
            return True
        return self.kind == "dnr-embed" and self.train_config.mode == "supervised_embed"

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind != "embedding-file":
            d["train_config"] = self.train_config.to_dict()
        else:
            d["embedding_shape"] = list(self.embeddings.shape)
        return d


@dataclass
class EvalReport:
    config: dict
    construction_nodes: list
    evaluation_size: int
    rows: list
    stage_seconds: dict = field(default_factory=dict)

    def aggregates(self) -> list:
        out = []
        for frac in sorted({r["fraction"] for r in self.rows}):
            cells = [r for r in self.rows if r["fraction"] == frac]
            mi = np.array([r["micro_f1"] for r in cells])
            ma = np.array([r["macro_f1"] for r in cells])
            out.append({
                "fraction": frac, "n": len(cells),
                "micro_f1_mean": float(mi.mean()), "micro_f1_std": float(mi.std()),
                "macro_f1_mean": float(ma.mean()), "macro_f1_std": float(ma.std()),
            })
        return out

    def to_dict(self, timing: bool = True) -> dict:
        rows = self.rows if timing else [{k: v for k, v in r.items() if k != "seconds"} for r in self.rows]
        d = {
            "schema_version": defaults.SCHEMA_VERSION,
            "config": self.config,
            "construction_nodes": self.construction_nodes,
            "evaluation_size": self.evaluation_size,
            "rows": rows,
            "aggregates": self.aggregates(),
        }
        if timing:
            d["stage_seconds"] = self.stage_seconds
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        fields = ["fraction", "repeat", "n_train", "n_test", "micro_f1", "macro_f1",
                  "ranking_seconds", "training_seconds", "evaluation_seconds"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for r in self.rows:
                flat = {k: r[k] for k in fields[:6]}
                flat.update({f"{k}_seconds": v for k, v in r["seconds"].items()})
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in flat.items()})


def split_nodes(nodes, fraction: float, seed, name: str):
    """Random (train, test) partition of ``nodes`` with ``round(fraction * n)`` train nodes."""
    nodes = np.asarray(nodes, dtype=np.int64)
    n_train = int(round(fraction * nodes.size))
    if n_train < 1 or n_train >= nodes.size:
        raise ValueError(f"fraction {fraction} of {nodes.size} nodes leaves an empty train or test set")
    perm = rng_for(seed, name).permutation(nodes)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def run_protocol(graph: Graph, labels: LabelMatrix, pipeline: Pipeline,
                 protocol: EvalProtocol = EvalProtocol()) -> EvalReport:
    """Sweep training fractions over the evaluation nodes and score each split."""
    if labels.n_nodes != graph.n_nodes:
        raise ValueError(f"labels cover {labels.n_nodes} nodes but the graph has {graph.n_nodes}")
    labeled = labels.labeled
    cfg = replace(pipeline.train_config, seed=derive_seed(protocol.seed, "network"))
    stage = {"ranking": 0.0, "training": 0.0, "embedding": 0.0}

    if pipeline.uses_construction:
        construction, evaluation = split_nodes(labeled, protocol.construction_fraction,
                                               protocol.seed, "construction")
    else:
        construction, evaluation = np.zeros(0, dtype=np.int64), labeled

    features = None
    if pipeline.kind == "embedding-file":
        features = np.asarray(pipeline.embeddings, dtype=np.float64)
        if features.shape[0] != graph.n_nodes:
            raise ValueError("embedding matrix must have one row per graph node")
    elif pipeline.kind == "dnr-embed":
        t0 = time.perf_counter()
        if cfg.supervised:
            trained = train(graph, labels, construction, cfg)
        else:
            trained = train(graph, None, np.arange(graph.n_nodes), cfg)
        t1 = time.perf_counter()
        features = np.zeros((graph.n_nodes, cfg.embed_dim))
        features[evaluation] = embed(trained, graph, evaluation).values
        stage["ranking"] = trained.rank_seconds
        stage["training"] = t1 - t0 - trained.rank_seconds
        stage["embedding"] = time.perf_counter() - t1

    counts = labels.counts()
    cells = [(fi, frac, r) for fi, frac in enumerate(protocol.train_fractions) for r in range(protocol.repeats)]

    def run_cell(cell):
        fi, frac, r = cell
        train_idx, test_idx = split_nodes(evaluation, frac, protocol.seed, f"split/{fi}/{r}")
        seconds = {"ranking": 0.0, "training": 0.0, "evaluation": 0.0}
        t0 = time.perf_counter()
        if features is not None:
            clf = train_logreg(features, labels, train_idx, protocol.l2_lambda)
            t1 = time.perf_counter()
            proba = clf.predict_proba(features[test_idx])
            seconds["training"] = t1 - t0
        else:
            cell_cfg = replace(cfg, seed=derive_seed(protocol.seed, f"e2e/{fi}/{r}"))
            trained = train(graph, labels, train_idx, cell_cfg)
            t1 = time.perf_counter()
            proba = classify_e2e(trained, graph, test_idx)
            seconds["ranking"] = trained.rank_seconds
            seconds["training"] = t1 - t0 - trained.rank_seconds
        pred = predict_topk(proba, counts[test_idx])
        micro, macro = micro_macro_f1(pred, labels.matrix[test_idx])
        seconds["evaluation"] = time.perf_counter() - t1
        return {"fraction": frac, "repeat": r, "n_train": int(train_idx.size), "n_test": int(test_idx.size),
                "micro_f1": micro, "macro_f1": macro, "seconds": seconds}

    if protocol.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=protocol.n_jobs) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    config = {"protocol": asdict(protocol), "pipeline": pipeline.describe()}
    config["protocol"]["train_fractions"] = list(protocol.train_fractions)
    config["protocol"].pop("n_jobs")
    return EvalReport(config, construction.tolist(), int(evaluation.size), rows, stage)
