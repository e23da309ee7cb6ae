"""Query-level joining of per-node walk sets.

A query's joined form is two regular buffers: the concatenated walk
matrices of its nodes, and an id buffer with one row per flattened walk
slot and one column per query node, holding the RPE id of that slot's node
relative to that query node. Shapes depend only on (arity, M, m), never on
the graph, which is the whole point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .graph import Query
from .store import RpeTable, SubgraphStore

QueryLike = Union[Query, Sequence[int]]


@dataclass
class JoinedQuery:
    """The regular per-query tensor pair fed to the encoder."""

    query: tuple[int, ...]
    walk_nodes: np.ndarray  # [arity*M, m+1] int32
    rpe_ids: np.ndarray  # [arity*M*(m+1), arity] int32, rows follow walk_nodes row-major


def _query_nodes(q: QueryLike) -> tuple[int, ...]:
    nodes = q.nodes if isinstance(q, Query) else tuple(int(v) for v in q)
    if len(nodes) < 1:
        raise ValueError("query needs at least one node")
    return nodes


def _as_query_array(store: SubgraphStore, queries: Sequence[QueryLike]) -> np.ndarray:
    rows = [_query_nodes(q) for q in queries]
    arity = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != arity:
            raise ValueError(f"mixed query arity in batch: query 0 has {arity} nodes, query {i} has {len(r)}")
    arr = np.asarray(rows, dtype=np.int64)
    if arr.min() < 0 or arr.max() >= store.num_nodes:
        bad = arr[(arr < 0) | (arr >= store.num_nodes)][0]
        raise ValueError(f"query node id {bad} out of range [0, {store.num_nodes})")
    return arr


def join_batch_arrays(
    store: SubgraphStore, query_array: np.ndarray, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Join a [B, arity] id array into stacked walk_nodes / rpe_ids buffers."""
    _kernels.set_kernel_threads(threads)
    n_batch, arity = query_array.shape
    m1 = store.walk_steps + 1
    walk_nodes = np.empty((n_batch, arity * store.num_walks, m1), dtype=np.int32)
    rpe_ids = np.empty((n_batch, arity * store.num_walks * m1, arity), dtype=np.int32)
    _kernels.join_fill(
        store.walks,
        store.dict_keys,
        store.dict_vals,
        store.dict_offsets,
        np.ascontiguousarray(query_array, dtype=np.int64),
        walk_nodes,
        rpe_ids,
    )
    return walk_nodes, rpe_ids


def join_query(store: SubgraphStore, q: QueryLike) -> JoinedQuery:
    """Join one query; deterministic and independent of thread count."""
    nodes = _query_nodes(q)
    arr = _as_query_array(store, [nodes])
    walk_nodes, rpe_ids = join_batch_arrays(store, arr, threads=1)
    return JoinedQuery(query=nodes, walk_nodes=walk_nodes[0], rpe_ids=rpe_ids[0])


def join_batch(
    store: SubgraphStore, queries: Sequence[QueryLike], threads: int = 1
) -> list[JoinedQuery]:
    """Join queries of uniform arity, preserving input order."""
    if not queries:
        return []
    arr = _as_query_array(store, queries)
    walk_nodes, rpe_ids = join_batch_arrays(store, arr, threads=threads)
    return [
        JoinedQuery(query=tuple(int(v) for v in arr[b]), walk_nodes=walk_nodes[b], rpe_ids=rpe_ids[b])
        for b in range(arr.shape[0])
    ]


def gather_rpe(table: RpeTable, jq: JoinedQuery) -> np.ndarray:
    """Densify a joined query: row r is the concatenation over query nodes of
    the count vectors behind rpe_ids[r], an [rows, arity*(m+1)] real matrix."""
    ids = jq.rpe_ids
    if ids.size and (ids.min() < 0 or ids.max() >= len(table)):
        raise ValueError(f"rpe id out of range for table of size {len(table)} (corrupt store?)")
    n_rows, arity = ids.shape
    dense = table.vectors[ids]  # [rows, arity, m+1]
    return dense.reshape(n_rows, arity * table.vectors.shape[1]).astype(np.float64)
