"""Training orchestration and online scoring.

Mini-batches grow by BFS over query-sharing neighbors: two nodes are
neighbors when some training query contains both. The walk data of a batch
therefore concentrates on a small seed set of nodes, and negatives are
drawn inside that seed set, which keeps every join in the batch hot.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from ._seeds import derive_seed
from .encoder import AdamState, ModelParams, adam_step, backward, bce_loss, forward, init_params
from .graph import Query, QuerySplit
from .joiner import join_batch_arrays
from .metrics import RankedQueryResult, mrr, roc_auc
from .store import SubgraphStore

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Knobs for the training loop; defaults follow the benchmark setup."""

    batch_capacity: int = 1500  # seed-set node limit (B1)
    batch_size: int = 32  # query limit per batch (B2)
    k_neg: int = 50
    lr: float = 1e-3
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    threads: int = 1
    hidden_dim: int = 64
    dropout: float = 0.1
    metric: str = "auc"  # "auc" or "mrr"
    use_features: bool = False

    def __post_init__(self):
        if self.batch_capacity < 1 or self.batch_size < 1 or self.k_neg < 1:
            raise ValueError("batch_capacity, batch_size, and k_neg must be >= 1")
        if self.metric not in ("auc", "mrr"):
            raise ValueError(f"unknown validation metric {self.metric!r}")


class QueryOverlapIndex:
    """node id -> indices of the training queries containing it."""

    def __init__(self, queries: Sequence[Query]):
        index: dict[int, list[int]] = {}
        for qid, q in enumerate(queries):
            for u in q.nodes:
                index.setdefault(u, []).append(qid)
        self._index = index
        self.nodes = np.array(sorted(index), dtype=np.int64)

    def queries_of(self, u: int) -> list[int]:
        return self._index.get(u, [])

    def __len__(self) -> int:
        return len(self._index)


def canonical_nodes(nodes: Sequence[int]) -> tuple[int, ...]:
    """Order-free form used to match queries against a positive set."""
    return tuple(sorted(int(v) for v in nodes))


def sample_minibatch(
    index: QueryOverlapIndex,
    queries: Sequence[Query],
    cfg: TrainConfig,
    rng: np.random.Generator,
    n_seeds: Optional[int] = None,
) -> tuple[list[int], list[int]]:
    """Grow one mini-batch by BFS over query-sharing neighbors.

    Returns (seed_set nodes in discovery order, batch query indices).
    Expansion stops at whichever of the two limits binds first; every
    returned query shares at least one node with the seed set.
    """
    if len(index) == 0:
        raise ValueError("empty training query set")
    if n_seeds is None:
        n_seeds = min(16, cfg.batch_capacity)
    n_seeds = min(n_seeds, len(index.nodes))
    seeds = rng.choice(index.nodes, size=n_seeds, replace=False)

    seed_list: list[int] = []
    in_seed: set[int] = set()
    batch: list[int] = []
    in_batch: set[int] = set()
    queue: deque[int] = deque()
    for s in seeds:
        s = int(s)
        if s not in in_seed:
            in_seed.add(s)
            seed_list.append(s)
            queue.append(s)
    full = False
    while queue and not full:
        u = queue.popleft()
        for qid in index.queries_of(u):
            if qid in in_batch:
                continue
            if len(batch) >= cfg.batch_size:
                full = True
                break
            in_batch.add(qid)
            batch.append(qid)
            for w in queries[qid].nodes:
                if w not in in_seed:
                    if len(seed_list) >= cfg.batch_capacity:
                        full = True
                        break
                    in_seed.add(w)
                    seed_list.append(w)
                    queue.append(w)
            if full:
                break
    return seed_list, batch


def sample_negatives(
    seed_set: Sequence[int],
    arity: int,
    count: int,
    positive_filter: set[tuple[int, ...]],
    rng: np.random.Generator,
) -> list[Query]:
    """Uniform node tuples inside the seed set, distinct nodes per query,
    rejected against the positive set. Errors once the rejection budget
    (1000x count) is spent, which flags a saturated seed set."""
    nodes = np.asarray(list(seed_set), dtype=np.int64)
    if nodes.shape[0] < arity:
        raise ValueError(f"seed set of {nodes.shape[0]} nodes cannot host arity-{arity} negatives")
    out: list[Query] = []
    budget = 1000 * count
    while len(out) < count:
        chunk = min(max(2 * (count - len(out)), 64), budget)
        if chunk <= 0:
            break
        draws = rng.integers(0, nodes.shape[0], size=(chunk, arity))
        budget -= chunk
        for row in draws:
            if len(out) >= count:
                break
            picked = nodes[row]
            if len(set(picked.tolist())) != arity:
                continue
            if canonical_nodes(picked) in positive_filter:
                continue
            out.append(Query(tuple(int(v) for v in picked), 0))
        if budget <= 0 and len(out) < count:
            raise ValueError(
                f"negative sampling budget exhausted after producing {len(out)}/{count} queries"
            )
    return out


def _dense_batch(
    store: SubgraphStore,
    query_array: np.ndarray,
    threads: int,
    features: Optional[np.ndarray],
) -> np.ndarray:
    walk_nodes, rpe_ids = join_batch_arrays(store, query_array, threads)
    n_batch, n_rows, arity = rpe_ids.shape
    width = store.walk_steps + 1
    dense = store.table.vectors[rpe_ids].reshape(n_batch, n_rows, arity * width).astype(np.float64)
    if features is not None:
        flat = walk_nodes.reshape(n_batch, n_rows)
        dense = np.concatenate([dense, features[flat]], axis=2)
    return dense


def _score_array(
    store: SubgraphStore,
    params: ModelParams,
    query_array: np.ndarray,
    threads: int,
    features: Optional[np.ndarray],
    chunk: int = 512,
) -> np.ndarray:
    scores = []
    for lo in range(0, query_array.shape[0], chunk):
        dense = _dense_batch(store, query_array[lo : lo + chunk], threads, features)
        logits, _ = forward(params, dense, training=False)
        scores.append(expit(logits))
    return np.concatenate(scores) if scores else np.empty(0, dtype=np.float64)


def _resolve_features(
    cfg_or_params, features: Optional[np.ndarray], store: SubgraphStore
) -> Optional[np.ndarray]:
    if features is None:
        return None
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != store.num_nodes:
        raise ValueError(
            f"feature matrix has {features.shape[0]} rows for {store.num_nodes} nodes"
        )
    return features


def _validation_metric(
    store: SubgraphStore,
    params: ModelParams,
    split: QuerySplit,
    cfg: TrainConfig,
    features: Optional[np.ndarray],
) -> float:
    pos_arr = np.array([q.nodes for q in split.valid_pos], dtype=np.int64)
    pos_scores = _score_array(store, params, pos_arr, cfg.threads, features)
    neg_lists = split.valid_neg
    flat_negs = [q.nodes for group in neg_lists for q in group]
    if not flat_negs:
        raise ValueError("validation requires negative queries (split.valid_neg is empty)")
    neg_scores = _score_array(
        store, params, np.array(flat_negs, dtype=np.int64), cfg.threads, features
    )
    if cfg.metric == "auc":
        return roc_auc(pos_scores, neg_scores)
    results = []
    pos_at = 0
    for i, group in enumerate(neg_lists):
        k = len(group)
        results.append(RankedQueryResult(float(pos_scores[i]), neg_scores[pos_at : pos_at + k]))
        pos_at += k
    return mrr(results)


def train(
    store: SubgraphStore,
    split: QuerySplit,
    cfg: TrainConfig,
    features: Optional[np.ndarray] = None,
    train_negatives: Optional[Sequence[Query]] = None,
) -> tuple[ModelParams, list[dict]]:
    """Run the mini-batched training loop with early stopping.

    Negatives are sampled inside each batch's seed set unless a fixed
    ``train_negatives`` pool is supplied, in which case batches draw from
    the pool instead. Returns the parameters of the best validation epoch
    and the per-epoch history (epoch, train_loss, valid_metric).
    """
    positives = split.train_pos
    if not positives:
        raise ValueError("empty training set")
    arity = len(positives[0])
    if any(len(q) != arity for q in positives):
        raise ValueError("training queries must share one arity")
    if not split.valid_pos:
        raise ValueError("training requires validation positives for early stopping")
    if cfg.use_features and features is None and split.train_graph is not None:
        features = split.train_graph.node_features
    features = _resolve_features(cfg, features if cfg.use_features else None, store)
    feature_dim = features.shape[1] if features is not None else 0

    params = init_params(
        arity,
        store.walk_steps,
        hidden=cfg.hidden_dim,
        feature_dim=feature_dim,
        dropout=cfg.dropout,
        seed=derive_seed(cfg.seed, "init"),
    )
    state = AdamState.for_params(params, lr=cfg.lr)
    index = QueryOverlapIndex(positives)
    pos_filter = {canonical_nodes(q.nodes) for q in positives}
    for group in (split.valid_pos, split.test_pos):
        pos_filter.update(canonical_nodes(q.nodes) for q in group)
    batch_rng = np.random.default_rng(derive_seed(cfg.seed, "minibatch"))
    drop_rng = np.random.default_rng(derive_seed(cfg.seed, "dropout"))

    history: list[dict] = []
    best_params = params.copy()
    best_metric = -np.inf
    best_epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        consumed = 0
        losses: list[float] = []
        while consumed < len(positives):
            seed_list, batch_ids = sample_minibatch(index, positives, cfg, batch_rng)
            if not batch_ids:
                break
            pos_batch = [positives[i] for i in batch_ids]
            n_neg = cfg.k_neg * len(pos_batch)
            if train_negatives:
                picks = batch_rng.integers(0, len(train_negatives), size=n_neg)
                negs = [train_negatives[int(i)] for i in picks]
            else:
                negs = sample_negatives(seed_list, arity, n_neg, pos_filter, batch_rng)
            batch_nodes = np.array([q.nodes for q in pos_batch + negs], dtype=np.int64)
            labels = np.concatenate([np.ones(len(pos_batch)), np.zeros(len(negs))])
            dense = _dense_batch(store, batch_nodes, cfg.threads, features)
            logits, cache = forward(params, dense, training=True, dropout_rng=drop_rng)
            losses.append(bce_loss(logits, labels))
            grads = backward(params, cache, labels)
            adam_step(params, grads, state)
            consumed += len(pos_batch)
        valid_metric = _validation_metric(store, params, split, cfg, features)
        wall = time.perf_counter() - t0
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "valid_metric": valid_metric}
        )
        logger.info(
            "epoch %d train_loss %.6f valid_%s %.6f wall %.2fs",
            epoch, float(np.mean(losses)), cfg.metric, valid_metric, wall,
        )
        if valid_metric > best_metric:
            best_metric = valid_metric
            best_params = params.copy()
            best_epoch = epoch
        if epoch - best_epoch >= cfg.patience:
            break
    return best_params, history


def infer(
    store: SubgraphStore,
    params: ModelParams,
    queries: Sequence,
    threads: int = 1,
    features: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Score queries (sigmoid of the logit), preserving input order."""
    if len(queries) == 0:
        return np.empty(0, dtype=np.float64)
    rows = [q.nodes if isinstance(q, Query) else tuple(q) for q in queries]
    arity = len(rows[0])
    if arity != params.arity:
        raise ValueError(f"queries have arity {arity} but model was trained with arity {params.arity}")
    if any(len(r) != arity for r in rows):
        raise ValueError("queries must share one arity")
    if params.feature_dim > 0:
        if features is None:
            raise ValueError("model expects node features but none were given")
        features = _resolve_features(params, features, store)
        if features.shape[1] != params.feature_dim:
            raise ValueError(
                f"feature matrix width {features.shape[1]} != model feature_dim {params.feature_dim}"
            )
    else:
        features = None
    return _score_array(store, params, np.array(rows, dtype=np.int64), threads, features)
