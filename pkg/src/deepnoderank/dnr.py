"""Deep Node Ranking training loop, embedding extraction and direct classification.

Rank vectors for the training nodes are produced on worker threads and
handed to the single training thread through a bounded queue; once
computed they stay in an in-memory sparse cache for later epochs and for
embedding extraction.
"""

from __future__ import annotations

import hashlib
import json
import logging
import queue
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import defaults
from .graph import Graph, LabelMatrix, TransitionMatrix, to_transition
from .neural import LayerSpec, NeuralModel, adam_step, backward, init_params
from .ppr import PPRConfig, ppr_matrix
from .seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

MODES = ("supervised_embed", "unsupervised_embed", "end_to_end")
ARCHITECTURES = ("plain", "conv", "attention")


class TrainingDiverged(RuntimeError):
    """A batch loss became NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "supervised_embed"
    architecture: str = "plain"
    embed_dim: int = defaults.EMBED_DIM
    batch_size: int = defaults.BATCH_SIZE
    max_epochs: int | None = None
    patience: int = defaults.PATIENCE
    plateau_tol: float = defaults.PLATEAU_TOL
    seed: int = 0
    activation: str = defaults.ACTIVATION
    conv_filters: int = defaults.CONV_FILTERS
    conv_kernel: int = defaults.CONV_KERNEL
    conv_pool: int = defaults.CONV_POOL
    learning_rate: float = defaults.LEARNING_RATE
    beta1: float = defaults.BETA1
    beta2: float = defaults.BETA2
    adam_eps: float = defaults.ADAM_EPS
    queue_capacity: int = defaults.QUEUE_CAPACITY
    n_jobs: int = 1
    ppr: PPRConfig = field(default_factory=PPRConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        for name in ("embed_dim", "batch_size", "patience", "queue_capacity", "n_jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_epochs is not None and self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")

    @property
    def epochs(self) -> int:
        if self.max_epochs is not None:
            return self.max_epochs
        if self.architecture == "attention":
            return defaults.MAX_EPOCHS_ATTENTION
        return defaults.MAX_EPOCHS

    @property
    def supervised(self) -> bool:
        return self.mode != "unsupervised_embed"

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def build_layers(cfg: TrainConfig, n_outputs: int) -> list[LayerSpec]:
    head = [LayerSpec("dense", cfg.embed_dim, cfg.activation), LayerSpec("dense", n_outputs, "sigmoid")]
    if cfg.architecture == "conv":
        return [LayerSpec("conv1d", filters=cfg.conv_filters, kernel=cfg.conv_kernel,
                          pool=cfg.conv_pool)] + head
    if cfg.architecture == "attention":
        return [LayerSpec("attention_gate")] + head
    return head


class RankCache:
    """Sparse in-memory store of computed rank vectors, keyed by node."""

    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        self._rows: dict[int, sp.csr_matrix] = {}

    def __contains__(self, node) -> bool:
        return int(node) in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def put(self, nodes, block: sp.csr_matrix) -> None:
        for i, node in enumerate(nodes):
            self._rows[int(node)] = block[i]

    def row(self, node) -> sp.csr_matrix:
        return self._rows[int(node)]

    def get(self, nodes) -> np.ndarray:
        if len(nodes) == 0:
            return np.zeros((0, self.n_nodes))
        return sp.vstack([self._rows[int(n)] for n in nodes]).toarray()


class RankStream:
    """Iterate ``(batch, rank_block)`` pairs computed on a producer thread.

    At most ``capacity`` computed batches wait in the queue; output order is
    the order of ``batches``.
    """

    _DONE = object()

    def __init__(self, T: TransitionMatrix, batches, cfg: PPRConfig, capacity=defaults.QUEUE_CAPACITY,
                 n_jobs=1):
        self.T = T
        self.batches = [list(b) for b in batches]
        self.cfg = cfg
        self.n_jobs = n_jobs
        self._queue: queue.Queue = queue.Queue(maxsize=capacity)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._produce, daemon=True)
        self.seconds = 0.0

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self):
        try:
            for batch in self.batches:
                t0 = time.perf_counter()
                block = ppr_matrix(self.T, batch, self.cfg, self.n_jobs)
                self.seconds += time.perf_counter() - t0
                if not self._put((batch, block)):
                    return
            self._put(self._DONE)
        except BaseException as exc:  # forwarded to the consumer
            self._put(exc)

    def __iter__(self):
        self._thread.start()
        try:
            while True:
                item = self._queue.get()
                if item is self._DONE:
                    return
                if isinstance(item, BaseException):
                    raise item
                yield item
        finally:
            self._stop.set()
            self._thread.join()


@dataclass
class TrainedDNR:
    """A trained network plus the rank cache and loss history it was built with."""

    model: NeuralModel
    config: TrainConfig
    transition: TransitionMatrix
    cache: RankCache
    train_nodes: np.ndarray
    n_outputs: int
    epoch_losses: list = field(default_factory=list)
    batch_losses: list = field(default_factory=list)
    rank_seconds: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_losses)


@dataclass
class EmbeddingMatrix:
    values: np.ndarray
    nodes: np.ndarray
    mode: str
    config_hash: str
    epochs_run: int


def _targets(graph: Graph, labels, nodes, cfg: TrainConfig) -> np.ndarray:
    if not cfg.supervised:
        return (graph.adjacency[nodes] > 0).astype(np.float64).toarray()
    return labels.matrix[nodes].astype(np.float64)


def train(graph: Graph, labels: LabelMatrix | None, train_nodes, cfg: TrainConfig = TrainConfig(),
          transition: TransitionMatrix | None = None) -> TrainedDNR:
    """Fit the network on the rank vectors of ``train_nodes``.

    Targets are label rows for the supervised and end-to-end modes and
    binarized adjacency rows for the unsupervised mode. Training stops after
    ``cfg.epochs`` epochs or once the epoch-mean loss has not improved by
    ``plateau_tol`` for ``patience`` consecutive epochs.
    """
    train_nodes = np.asarray(train_nodes, dtype=np.int64)
    if train_nodes.size == 0:
        raise ValueError("train_nodes is empty")
    if train_nodes.min() < 0 or train_nodes.max() >= graph.n_nodes:
        raise IndexError("train_nodes contains out-of-range indices")
    if cfg.supervised:
        if labels is None:
            raise ValueError(f"mode {cfg.mode!r} requires labels")
        if labels.n_nodes != graph.n_nodes:
            raise ValueError(f"labels cover {labels.n_nodes} nodes but the graph has {graph.n_nodes}")
        unlabeled = train_nodes[labels.matrix[train_nodes].sum(axis=1) == 0]
        if unlabeled.size:
            raise ValueError(f"{unlabeled.size} training nodes carry no label, e.g. node {unlabeled[0]}")
        n_outputs = labels.n_classes
    else:
        n_outputs = graph.n_nodes

    T = transition if transition is not None else to_transition(graph)
    model = init_params(build_layers(cfg, n_outputs), graph.n_nodes, derive_seed(cfg.seed, "init"))
    shuffle = rng_for(cfg.seed, "shuffle")
    cache = RankCache(graph.n_nodes)
    result = TrainedDNR(model, cfg, T, cache, train_nodes.copy(), n_outputs)

    best, wait = np.inf, 0
    for epoch in range(cfg.epochs):
        order = shuffle.permutation(train_nodes)
        batches = [order[i : i + cfg.batch_size] for i in range(0, order.size, cfg.batch_size)]
        if epoch == 0:
            stream = RankStream(T, batches, cfg.ppr, cfg.queue_capacity, cfg.n_jobs)
            producer = stream
        else:
            stream = ((b, None) for b in batches)
        total = 0.0
        for batch, block in stream:
            if block is not None:
                cache.put(batch, block)
            X = cache.get(batch)
            Y = _targets(graph, labels, batch, cfg)
            loss, grads = backward(model, X, Y)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} in epoch {epoch + 1}")
            adam_step(model, grads, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
            result.batch_losses.append(loss)
            total += loss * len(batch)
        if epoch == 0:
            result.rank_seconds = producer.seconds
        epoch_loss = total / train_nodes.size
        result.epoch_losses.append(epoch_loss)
        logger.debug("epoch %d: loss %.6g", epoch + 1, epoch_loss)
        if epoch_loss < best - cfg.plateau_tol:
            best, wait = epoch_loss, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                logger.info("loss plateaued; stopping after %d epochs", epoch + 1)
                break
    return result


def rank_vectors(trained: TrainedDNR, nodes) -> np.ndarray:
    """Rank vectors for ``nodes``: cached where available, computed otherwise."""
    nodes = np.asarray(nodes, dtype=np.int64)
    missing = sorted({int(n) for n in nodes if n not in trained.cache})
    fresh = {}
    if missing:
        cfg = trained.config
        batches = [missing[i : i + cfg.batch_size] for i in range(0, len(missing), cfg.batch_size)]
        for batch, block in RankStream(trained.transition, batches, cfg.ppr, cfg.queue_capacity, cfg.n_jobs):
            for i, node in enumerate(batch):
                fresh[node] = block[i]
    rows = [trained.cache.row(n) if n in trained.cache else fresh[int(n)] for n in nodes]
    if not rows:
        return np.zeros((0, trained.transition.n_nodes))
    return sp.vstack(rows).toarray()


def _rowwise(model: NeuralModel, X: np.ndarray, upto=None) -> np.ndarray:
    # one row at a time so results do not depend on which nodes share a batch
    width = model.dims()[upto if upto is not None else -1]
    out = np.empty((X.shape[0], width))
    for i in range(X.shape[0]):
        out[i] = model.forward(X[i : i + 1], upto)[0]
    return out


def embed(trained: TrainedDNR, graph: Graph, nodes=None) -> EmbeddingMatrix:
    """Hidden-layer activations of width ``embed_dim`` for ``nodes``."""
    if graph.n_nodes != trained.model.input_dim:
        raise ValueError(f"model expects {trained.model.input_dim} nodes, graph has {graph.n_nodes}")
    nodes = np.arange(graph.n_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    X = rank_vectors(trained, nodes)
    values = _rowwise(trained.model, X, upto=len(trained.model.specs) - 1)
    return EmbeddingMatrix(values, nodes, trained.config.mode, trained.config.digest(), trained.epochs_run)


def classify_e2e(trained: TrainedDNR, graph: Graph, nodes=None) -> np.ndarray:
    """Sigmoid class probabilities, one row per node."""
    if trained.config.mode != "end_to_end":
        raise ValueError(f"model was trained in {trained.config.mode!r} mode, not 'end_to_end'")
    if graph.n_nodes != trained.model.input_dim:
        raise ValueError(f"model expects {trained.model.input_dim} nodes, graph has {graph.n_nodes}")
    nodes = np.arange(graph.n_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    return _rowwise(trained.model, rank_vectors(trained, nodes))
