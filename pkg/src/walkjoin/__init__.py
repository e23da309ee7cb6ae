"""Walk-based subgraph scoring for prediction over node sets.

Instead of extracting an enclosing subgraph per query, every node gets a
reusable set of seeded random walks plus positional count vectors computed
once during preprocessing. At query time the per-node walk sets are joined
into one fixed-shape buffer and scored by a small feed-forward network.
"""

import os as _os

# Numba caps set_num_threads() at NUMBA_NUM_THREADS, which defaults to the
# core count. Raise the ceiling before numba is first imported so that
# oversubscribed thread counts (used by the determinism harness) are legal.
_os.environ.setdefault("NUMBA_NUM_THREADS", str(max(_os.cpu_count() or 1, 16)))

from .graph import (
    Graph,
    GraphFormatError,
    Query,
    QuerySplit,
    generate_sbm,
    load_edge_list,
    project_hyperedges,
    read_query_file,
    remove_edges,
    split_link_queries,
)
from .sampler import RawRpeMap, WalkRng, WalkSet, compute_rpe, preprocess, sample_walks
from .store import (
    NodeEntry,
    RpeTable,
    StoreFormatError,
    SubgraphStore,
    dedup_and_reindex,
    get_rpe_id,
    load_store,
    save_store,
)
from .joiner import JoinedQuery, gather_rpe, join_batch, join_query
from .encoder import (
    AdamState,
    CheckpointError,
    ModelParams,
    adam_step,
    backward,
    bce_loss,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .pipeline import QueryOverlapIndex, TrainConfig, infer, sample_minibatch, sample_negatives, train
from .metrics import RankedQueryResult, hits_at_k, mrr, rank_of_positive, roc_auc
from .estimator import WalkJoinClassifier

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "GraphFormatError",
    "Query",
    "QuerySplit",
    "load_edge_list",
    "project_hyperedges",
    "remove_edges",
    "split_link_queries",
    "generate_sbm",
    "read_query_file",
    "WalkSet",
    "RawRpeMap",
    "WalkRng",
    "sample_walks",
    "compute_rpe",
    "preprocess",
    "RpeTable",
    "NodeEntry",
    "SubgraphStore",
    "StoreFormatError",
    "dedup_and_reindex",
    "get_rpe_id",
    "save_store",
    "load_store",
    "JoinedQuery",
    "join_query",
    "join_batch",
    "gather_rpe",
    "ModelParams",
    "AdamState",
    "CheckpointError",
    "init_params",
    "forward",
    "backward",
    "bce_loss",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "QueryOverlapIndex",
    "TrainConfig",
    "sample_minibatch",
    "sample_negatives",
    "train",
    "infer",
    "RankedQueryResult",
    "rank_of_positive",
    "mrr",
    "hits_at_k",
    "roc_auc",
    "WalkJoinClassifier",
]
