"""Scikit-learn style front-end.

WalkJoinClassifier wraps preprocessing, training, and scoring behind the
usual fit/predict_proba surface so the scorer drops into sklearn tooling
(cross-validation, calibration, metric functions). X is an integer array of
node-id queries, [n_queries, arity]; the graph is passed to fit.

Walks are sampled on the graph exactly as given. For link prediction,
remove the positive edges first (split_link_queries does this) so the walk
structure cannot leak the training answers.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._seeds import derive_seed
from .graph import Graph, Query, QuerySplit
from .pipeline import TrainConfig, canonical_nodes, infer, sample_negatives, train
from .sampler import preprocess


def validate_queries(X, num_nodes: Optional[int] = None, arity: Optional[int] = None) -> np.ndarray:
    """Check a query array: 2D integer, valid ids, distinct nodes per row."""
    X = check_array(X, dtype=np.int64, ensure_2d=True)
    if X.shape[1] < 2:
        raise ValueError(f"queries need at least 2 nodes, got arity {X.shape[1]}")
    if arity is not None and X.shape[1] != arity:
        raise ValueError(f"expected arity {arity}, got {X.shape[1]}")
    if X.min() < 0:
        raise ValueError("node ids must be non-negative")
    if num_nodes is not None and X.max() >= num_nodes:
        raise ValueError(f"node id {X.max()} out of range [0, {num_nodes})")
    sorted_rows = np.sort(X, axis=1)
    if np.any(sorted_rows[:, 1:] == sorted_rows[:, :-1]):
        raise ValueError("queries must not repeat a node")
    return X


class WalkJoinClassifier(BaseEstimator, ClassifierMixin):
    """Binary scorer for node-set queries over a fixed graph.

    Parameters mirror the training pipeline: M walks of m steps per node
    are sampled once in fit, and a small feed-forward network is trained on
    the joined walk buffers with BFS mini-batching and early stopping.

    Examples
    --------
    >>> g = generate_sbm(2, 100, 0.1, 0.01, seed=3)
    >>> clf = WalkJoinClassifier(num_walks=20, walk_steps=2, max_epochs=5)
    >>> clf.fit(g, pairs, labels)
    >>> clf.predict_proba(other_pairs)[:, 1]
    """

    def __init__(
        self,
        num_walks: int = 200,
        walk_steps: int = 4,
        hidden_dim: int = 64,
        learning_rate: float = 1e-3,
        max_epochs: int = 50,
        patience: int = 5,
        batch_capacity: int = 1500,
        batch_size: int = 32,
        neg_per_pos: int = 50,
        dropout: float = 0.1,
        valid_fraction: float = 0.1,
        valid_negatives: int = 20,
        metric: str = "auc",
        use_features: bool = False,
        seed: int = 0,
        threads: int = 1,
    ):
        self.num_walks = num_walks
        self.walk_steps = walk_steps
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_capacity = batch_capacity
        self.batch_size = batch_size
        self.neg_per_pos = neg_per_pos
        self.dropout = dropout
        self.valid_fraction = valid_fraction
        self.valid_negatives = valid_negatives
        self.metric = metric
        self.use_features = use_features
        self.seed = seed
        self.threads = threads

    def fit(self, graph: Graph, X, y=None):
        """Preprocess the graph and train the scorer.

        X holds the training queries; y gives binary labels (missing y
        means every row is a positive). Label-0 rows become a fixed
        negative pool; otherwise negatives are sampled per batch inside
        the seed set.
        """
        if not isinstance(graph, Graph):
            raise TypeError("fit expects a walkjoin Graph as the first argument")
        X = validate_queries(X, num_nodes=graph.num_nodes)
        if y is None:
            y = np.ones(X.shape[0], dtype=np.int64)
        y = check_array(y, dtype=np.int64, ensure_2d=False)
        if y.shape != (X.shape[0],) or not np.isin(y, (0, 1)).all():
            raise ValueError("y must be a binary vector with one label per query")
        pos = X[y == 1]
        neg_pool = [Query(tuple(int(v) for v in row), 0) for row in X[y == 0]]
        if pos.shape[0] < 2:
            raise ValueError("need at least 2 positive queries to fit")

        rng = np.random.default_rng(derive_seed(self.seed, "fit-split"))
        order = rng.permutation(pos.shape[0])
        n_valid = min(max(1, int(round(self.valid_fraction * pos.shape[0]))), pos.shape[0] - 1)
        valid_rows = pos[order[:n_valid]]
        train_rows = pos[order[n_valid:]]

        pos_filter = {canonical_nodes(row) for row in pos}
        all_nodes = np.arange(graph.num_nodes)
        valid_neg = [
            sample_negatives(all_nodes, pos.shape[1], self.valid_negatives, pos_filter, rng)
            for _ in range(valid_rows.shape[0])
        ]

        self.store_ = preprocess(
            graph,
            self.num_walks,
            self.walk_steps,
            seed=derive_seed(self.seed, "preprocess"),
            threads=self.threads,
        )
        split = QuerySplit(
            train_pos=[Query(tuple(int(v) for v in row), 1) for row in train_rows],
            valid_pos=[Query(tuple(int(v) for v in row), 1) for row in valid_rows],
            test_pos=[],
            valid_neg=valid_neg,
            test_neg=[],
            train_graph=graph,
        )
        cfg = TrainConfig(
            batch_capacity=self.batch_capacity,
            batch_size=self.batch_size,
            k_neg=self.neg_per_pos,
            lr=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=derive_seed(self.seed, "train"),
            threads=self.threads,
            hidden_dim=self.hidden_dim,
            dropout=self.dropout,
            metric=self.metric,
            use_features=self.use_features,
        )
        features = graph.node_features if self.use_features else None
        self.params_, self.history_ = train(
            self.store_, split, cfg, features=features, train_negatives=neg_pool or None
        )
        self.features_ = features
        self.arity_ = pos.shape[1]
        self.classes_ = np.array([0, 1])
        return self

    def _scores(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = validate_queries(X, num_nodes=self.store_.num_nodes, arity=self.arity_)
        return infer(self.store_, self.params_, X, threads=self.threads, features=self.features_)

    def predict_proba(self, X) -> np.ndarray:
        p = self._scores(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self._scores(X) >= 0.5).astype(np.int64)

    def decision_function(self, X) -> np.ndarray:
        return self._scores(X)
