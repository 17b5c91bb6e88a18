"""scikit-learn style wrappers around :mod:`deepnoderank.dnr`.

``fit`` takes the graph (a :class:`Graph` or a square adjacency matrix whose
rows are edge sources) plus, for supervised use, node labels; ``transform``
and ``predict*`` take node indices (``None`` meaning every node).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import defaults
from .dnr import TrainConfig, classify_e2e, embed, train
from .evaluation import predict_topk
from .ppr import PPRConfig
from .validation import check_graph, check_labels, check_nodes


class _DNRBase(BaseEstimator):
    def __init__(self, architecture="plain", embed_dim=defaults.EMBED_DIM, batch_size=defaults.BATCH_SIZE,
                 max_epochs=None, patience=defaults.PATIENCE, plateau_tol=defaults.PLATEAU_TOL,
                 activation=defaults.ACTIVATION, learning_rate=defaults.LEARNING_RATE,
                 conv_filters=defaults.CONV_FILTERS, conv_kernel=defaults.CONV_KERNEL,
                 conv_pool=defaults.CONV_POOL, damping=defaults.DAMPING, epsilon=defaults.EPSILON,
                 max_steps=defaults.MAX_STEPS, spread_step=defaults.SPREAD_STEP,
                 spread_percent=defaults.SPREAD_PERCENT, random_state=0, n_jobs=1):
        self.architecture = architecture
        self.embed_dim = embed_dim
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.plateau_tol = plateau_tol
        self.activation = activation
        self.learning_rate = learning_rate
        self.conv_filters = conv_filters
        self.conv_kernel = conv_kernel
        self.conv_pool = conv_pool
        self.damping = damping
        self.epsilon = epsilon
        self.max_steps = max_steps
        self.spread_step = spread_step
        self.spread_percent = spread_percent
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _train_config(self, mode) -> TrainConfig:
        ppr = PPRConfig(self.damping, self.epsilon, self.max_steps, self.spread_step, self.spread_percent)
        return TrainConfig(
            mode=mode, architecture=self.architecture, embed_dim=self.embed_dim,
            batch_size=self.batch_size, max_epochs=self.max_epochs, patience=self.patience,
            plateau_tol=self.plateau_tol, seed=0 if self.random_state is None else int(self.random_state),
            activation=self.activation, conv_filters=self.conv_filters, conv_kernel=self.conv_kernel,
            conv_pool=self.conv_pool, learning_rate=self.learning_rate, n_jobs=self.n_jobs, ppr=ppr,
        )

    def _fit(self, X, y, train_nodes, mode):
        graph = check_graph(X)
        labels = None if y is None else check_labels(y, graph.n_nodes)
        if train_nodes is None:
            train_nodes = labels.labeled if labels is not None else np.arange(graph.n_nodes)
        nodes = check_nodes(train_nodes, graph.n_nodes)
        self.graph_ = graph
        self.trained_ = train(graph, labels, nodes, self._train_config(mode))
        self.n_nodes_ = graph.n_nodes
        self.n_epochs_ = self.trained_.epochs_run
        self.loss_curve_ = list(self.trained_.epoch_losses)
        if labels is not None:
            self.classes_ = np.array(labels.class_names)
        return self


class DNREmbedder(TransformerMixin, _DNRBase, auto_wrap_output_keys=None):
    """Node embeddings from a network trained on personalized PageRank vectors.

    With ``supervised=True`` the network learns to predict node labels of
    ``train_nodes``; otherwise it reconstructs each node's adjacency row.
    """

    def __init__(self, supervised=True, architecture="plain", embed_dim=defaults.EMBED_DIM,
                 batch_size=defaults.BATCH_SIZE, max_epochs=None, patience=defaults.PATIENCE,
                 plateau_tol=defaults.PLATEAU_TOL, activation=defaults.ACTIVATION,
                 learning_rate=defaults.LEARNING_RATE, conv_filters=defaults.CONV_FILTERS,
                 conv_kernel=defaults.CONV_KERNEL, conv_pool=defaults.CONV_POOL, damping=defaults.DAMPING,
                 epsilon=defaults.EPSILON, max_steps=defaults.MAX_STEPS, spread_step=defaults.SPREAD_STEP,
                 spread_percent=defaults.SPREAD_PERCENT, random_state=0, n_jobs=1):
        super().__init__(architecture, embed_dim, batch_size, max_epochs, patience, plateau_tol, activation,
                         learning_rate, conv_filters, conv_kernel, conv_pool, damping, epsilon, max_steps,
                         spread_step, spread_percent, random_state, n_jobs)
        self.supervised = supervised

    def fit(self, X, y=None, train_nodes=None):
        if self.supervised and y is None:
            raise ValueError("supervised embedding needs node labels; pass y or set supervised=False")
        mode = "supervised_embed" if self.supervised else "unsupervised_embed"
        return self._fit(X, y if self.supervised else None, train_nodes, mode)

    def transform(self, X=None):
        check_is_fitted(self, "trained_")
        nodes = check_nodes(X, self.n_nodes_)
        return embed(self.trained_, self.graph_, nodes).values

    def fit_transform(self, X, y=None, train_nodes=None):
        return self.fit(X, y, train_nodes).transform(None)


class DNRClassifier(ClassifierMixin, _DNRBase):
    """End-to-end multi-label node classifier on personalized PageRank vectors."""

    def fit(self, X, y, train_nodes=None):
        return self._fit(X, y, train_nodes, "end_to_end")

    def predict_proba(self, X=None):
        check_is_fitted(self, "trained_")
        nodes = check_nodes(X, self.n_nodes_)
        return classify_e2e(self.trained_, self.graph_, nodes)

    def predict(self, X=None, n_labels=None):
        """Top-``n_labels`` classes per node (one each by default) as an indicator matrix."""
        proba = self.predict_proba(X)
        counts = np.ones(proba.shape[0], dtype=np.int64) if n_labels is None else n_labels
        return predict_topk(proba, np.broadcast_to(counts, (proba.shape[0],)))
