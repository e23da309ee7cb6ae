"""Walk sampling and positional encoding.

Every node owns M walks of m steps. A walk is stored as m+1 node ids
including the anchor, matching the position-count vectors in R^{m+1}. The
positional count of node x relative to anchor u records how often x sits at
each step offset across u's walks.

Randomness: node u's walks come from a counter stream seeded by
hash(seed, u), so sampling parallelizes over nodes with no shared state and
the result is independent of the thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import Graph
from .store import RpeTable, SubgraphStore, dict_capacities, intern_vectors

_MASK64 = (1 << 64) - 1


@dataclass
class WalkSet:
    """M walks of m steps starting at one anchor; column 0 is the anchor."""

    anchor: int
    walks: np.ndarray  # [M, m+1] int32


@dataclass
class RawRpeMap:
    """Positional counts per node reached from one anchor, keyed by node id
    in first-appearance order over the anchor's walks."""

    entries: dict[int, np.ndarray] = field(default_factory=dict)


class WalkRng:
    """Counter-based stream handing out the walk steps for one node."""

    def __init__(self, state: int):
        self.state = int(state) & _MASK64

    @classmethod
    def for_node(cls, seed: int, node: int) -> "WalkRng":
        state = _kernels.node_stream_state(np.uint64(int(seed) & _MASK64), np.uint64(node))
        return cls(int(state))


def _alloc(shape, dtype):
    try:
        return np.empty(shape, dtype=dtype)
    except MemoryError:
        raise MemoryError(f"allocation failed for array of shape {shape} ({dtype})") from None


def sample_walks(g: Graph, u: int, num_walks: int, num_steps: int, rng: WalkRng) -> WalkSet:
    """Sample num_walks walks of num_steps uniform steps from u.

    A degree-0 anchor repeats itself for every step, keeping the matrix
    shape regular. The rng state is consumed and advanced.
    """
    if not 0 <= u < g.num_nodes:
        raise ValueError(f"node id {u} out of range [0, {g.num_nodes})")
    if num_walks < 1 or num_steps < 1:
        raise ValueError("num_walks and num_steps must be >= 1")
    out = _alloc((num_walks, num_steps + 1), np.int32)
    end = _kernels.sample_node_walks(
        g.idxptr, g.indices, u, num_walks, num_steps, np.uint64(rng.state), out
    )
    rng.state = int(end)
    return WalkSet(anchor=int(u), walks=out)


def compute_rpe(ws: WalkSet) -> RawRpeMap:
    """Exact positional counts for every node in the walk set."""
    width = ws.walks.shape[1]
    entries: dict[int, np.ndarray] = {}
    for row in ws.walks:
        for i in range(width):
            x = int(row[i])
            vec = entries.get(x)
            if vec is None:
                vec = np.zeros(width, dtype=np.int32)
                entries[x] = vec
            vec[i] += 1
    return RawRpeMap(entries)


def preprocess(
    g: Graph, num_walks: int, num_steps: int, seed: int, threads: int = 1
) -> SubgraphStore:
    """Build the full store: walks, dictionaries, and deduplicated table.

    Sampling and counting run in parallel over nodes; the dedup pass is a
    sequential scan in ascending node order so table ids are reproducible.
    Output is bit-identical for any thread count.
    """
    if num_walks < 1 or num_steps < 1:
        raise ValueError("num_walks and num_steps must be >= 1")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if g.num_nodes >= 2**31:
        raise ValueError("graphs with >= 2^31 nodes are not supported")
    _kernels.set_kernel_threads(threads)
    seed64 = np.uint64(int(seed) & _MASK64)
    n = g.num_nodes
    width = num_steps + 1

    walks = _alloc((n, num_walks, width), np.int32)
    _kernels.sample_all_walks(g.idxptr, g.indices, num_walks, num_steps, seed64, walks)

    local_cap = 1
    while local_cap < 2 * num_walks * width:
        local_cap <<= 1
    counts = _alloc(n, np.int64)
    _kernels.count_distinct_all(walks, local_cap, counts)
    item_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=item_offsets[1:])
    total = int(item_offsets[-1])

    nodes_flat = _alloc(total, np.int32)
    vecs = _alloc((total, width), np.int32)
    _kernels.fill_distinct_all(walks, item_offsets, local_cap, nodes_flat, vecs)

    rpe_ids, table = intern_vectors(vecs)
    del vecs

    caps = dict_capacities(counts)
    cap_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(caps, out=cap_offsets[1:])
    dict_keys = np.full(int(cap_offsets[-1]), -1, dtype=np.int32)
    dict_vals = np.zeros(int(cap_offsets[-1]), dtype=np.int32)
    _kernels.build_dicts(nodes_flat, rpe_ids, item_offsets, cap_offsets, dict_keys, dict_vals)

    return SubgraphStore(
        num_nodes=n,
        num_walks=num_walks,
        walk_steps=num_steps,
        seed=int(seed64),
        walks=walks,
        table=RpeTable(table),
        dict_offsets=cap_offsets,
        dict_keys=dict_keys,
        dict_vals=dict_vals,
        id_map=g.id_map,
    )
