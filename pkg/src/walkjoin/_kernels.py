"""Numba kernels for the parallel hot paths: walk sampling, positional
counting, count-vector interning, packed per-node dictionaries, and the
query join fill.

Determinism contract: every parallel kernel writes disjoint, pre-allocated
slots and draws randomness only from a per-node counter stream, so output
is bit-identical for any thread count. The interning pass is sequential on
purpose (table ids depend on scan order).
"""

import os

os.environ.setdefault("NUMBA_NUM_THREADS", str(max(os.cpu_count() or 1, 16)))

import numpy as np
from numba import njit, prange

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)


@njit(inline="always")
def _mix64(z):
    # splitmix64 finalizer
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@njit(inline="always")
def _next_u64(state):
    state = state + _GOLDEN
    return state, _mix64(state)


@njit(inline="always")
def _bounded(z, n):
    # multiply-shift map of the top 32 bits onto [0, n); n < 2^31
    return int64_of((z >> U64(32)) * U64(n) >> U64(32))


@njit(inline="always")
def int64_of(x):
    return np.int64(x)


@njit(cache=True)
def node_stream_state(seed, u):
    """Start state of the walk RNG stream owned by node u."""
    return _mix64(U64(seed) + _GOLDEN * (U64(u) + U64(1)))


@njit(cache=True)
def sample_node_walks(idxptr, indices, u, num_walks, num_steps, state, out):
    """Fill out[num_walks, num_steps+1] with walks from u; returns end state."""
    for j in range(num_walks):
        cur = u
        out[j, 0] = cur
        for i in range(1, num_steps + 1):
            deg = idxptr[cur + 1] - idxptr[cur]
            if deg > 0:
                state, z = _next_u64(state)
                cur = indices[idxptr[cur] + _bounded(z, deg)]
            # deg == 0: dead end, repeat the current node
            out[j, i] = cur
    return state


@njit(cache=True, parallel=True)
def sample_all_walks(idxptr, indices, num_walks, num_steps, seed, walks):
    n = idxptr.shape[0] - 1
    for u in prange(n):
        state = node_stream_state(seed, u)
        sample_node_walks(idxptr, indices, u, num_walks, num_steps, state, walks[u])


@njit(inline="always")
def _probe_local(keys, x, cap_mask):
    h = int64_of(_mix64(U64(x)) & U64(cap_mask))
    while True:
        k = keys[h]
        if k == -1 or k == x:
            return h
        h = (h + 1) & cap_mask


@njit(cache=True, parallel=True)
def count_distinct_all(walks, local_cap, counts_out):
    """counts_out[u] = number of distinct node ids in walks[u]."""
    n = walks.shape[0]
    for u in prange(n):
        keys = np.full(local_cap, -1, np.int64)
        k = 0
        flat = walks[u].ravel()
        for t in range(flat.shape[0]):
            x = np.int64(flat[t])
            h = _probe_local(keys, x, local_cap - 1)
            if keys[h] == -1:
                keys[h] = x
                k += 1
        counts_out[u] = k


@njit(cache=True, parallel=True)
def fill_distinct_all(walks, offsets, local_cap, nodes_out, vecs_out):
    """Per node, list distinct ids in first-appearance order (row-major walk
    scan) and their positional count vectors, packed at offsets[u]."""
    n = walks.shape[0]
    width = walks.shape[2]
    for u in prange(n):
        keys = np.full(local_cap, -1, np.int64)
        slot = np.empty(local_cap, np.int64)
        base = offsets[u]
        k = 0
        for j in range(walks.shape[1]):
            for i in range(width):
                x = np.int64(walks[u, j, i])
                h = _probe_local(keys, x, local_cap - 1)
                if keys[h] == -1:
                    keys[h] = x
                    slot[h] = k
                    nodes_out[base + k] = x
                    for c in range(width):
                        vecs_out[base + k, c] = 0
                    k += 1
                vecs_out[base + slot[h], i] += 1


@njit(inline="always")
def _hash_row(vecs, r):
    h = _GOLDEN
    for c in range(vecs.shape[1]):
        h = _mix64(h ^ (U64(vecs[r, c]) + _GOLDEN))
    return h


@njit(cache=True)
def intern_rows(vecs, ids_out, reps_out):
    """Deduplicate rows of vecs in scan order.

    ids_out[r] gets the 0-based unique id of row r; reps_out collects the
    first-occurrence row index per unique id. Returns the unique count.
    Sequential: ids must reflect first-occurrence order.
    """
    n_rows = vecs.shape[0]
    cap = 1
    while cap < 2 * n_rows + 2:
        cap <<= 1
    mask = cap - 1
    table = np.full(cap, -1, np.int64)
    n_unique = 0
    for r in range(n_rows):
        h = int64_of(_hash_row(vecs, r) & U64(mask))
        while True:
            s = table[h]
            if s == -1:
                table[h] = r
                ids_out[r] = n_unique
                reps_out[n_unique] = r
                n_unique += 1
                break
            same = True
            for c in range(vecs.shape[1]):
                if vecs[s, c] != vecs[r, c]:
                    same = False
                    break
            if same:
                ids_out[r] = ids_out[s]
                break
            h = (h + 1) & mask
    return n_unique


@njit(cache=True, parallel=True)
def build_dicts(nodes_flat, vals_flat, item_offsets, cap_offsets, keys_out, vals_out):
    """Insert per-node (node id -> rpe id) pairs into packed open-addressing
    tables. keys_out must be pre-filled with -1; capacities are powers of 2."""
    n = item_offsets.shape[0] - 1
    for u in prange(n):
        base = cap_offsets[u]
        mask = cap_offsets[u + 1] - base - 1
        for t in range(item_offsets[u], item_offsets[u + 1]):
            x = np.int64(nodes_flat[t])
            h = int64_of(_mix64(U64(x)) & U64(mask))
            while keys_out[base + h] != -1:
                h = (h + 1) & mask
            keys_out[base + h] = x
            vals_out[base + h] = vals_flat[t]


@njit(inline="always")
def dict_get(keys, vals, base, mask, x):
    h = int64_of(_mix64(U64(x)) & U64(mask))
    while True:
        k = keys[base + h]
        if k == x:
            return vals[base + h]
        if k == -1:
            return 0
        h = (h + 1) & mask


@njit(cache=True)
def dict_get_one(keys, vals, cap_offsets, u, x):
    base = cap_offsets[u]
    return dict_get(keys, vals, base, cap_offsets[u + 1] - base - 1, x)


@njit(cache=True, parallel=True)
def join_fill(walks, dict_keys, dict_vals, cap_offsets, queries, walk_nodes_out, rpe_ids_out):
    """Fill the per-query walk concatenation and the RPE-id buffer.

    walks:          [n, M, m+1] store walks
    queries:        [B, A] node ids
    walk_nodes_out: [B, A*M, m+1]
    rpe_ids_out:    [B, A*M*(m+1), A], row r = flat slot of walk_nodes,
                    column j = id relative to query node j.

    Parallel over (query, query-slot) pairs; each task writes one anchor's
    walk block and one rpe_ids column.
    """
    n_batch, arity = queries.shape
    num_walks = walks.shape[1]
    width = walks.shape[2]
    block = num_walks * width
    for task in prange(n_batch * arity):
        b = task // arity
        j = task % arity
        anchor = queries[b, j]
        # walk block owned by slot j
        for w in range(num_walks):
            for i in range(width):
                walk_nodes_out[b, j * num_walks + w, i] = walks[anchor, w, i]
        # rpe id column j, spanning every anchor's walks
        base = cap_offsets[anchor]
        mask = cap_offsets[anchor + 1] - base - 1
        for a in range(arity):
            src = queries[b, a]
            r0 = a * block
            for w in range(num_walks):
                for i in range(width):
                    x = np.int64(walks[src, w, i])
                    rpe_ids_out[b, r0 + w * width + i, j] = dict_get(
                        dict_keys, dict_vals, base, mask, x
                    )


def set_kernel_threads(threads: int) -> int:
    """Set the worker count for the parallel kernels, clamped to the numba
    ceiling (raised above the core count by the package __init__)."""
    import numba

    actual = max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(actual)
    return actual


def warmup():
    """Compile the kernels on a toy input (first call pays the JIT cost)."""
    idxptr = np.array([0, 1, 2], np.int64)
    indices = np.array([1, 0], np.int32)
    walks = np.zeros((2, 2, 3), np.int32)
    sample_all_walks(idxptr, indices, 2, 2, 7, walks)
    counts = np.zeros(2, np.int64)
    count_distinct_all(walks, 16, counts)
    offsets = np.zeros(3, np.int64)
    offsets[1:] = np.cumsum(counts)
    total = int(offsets[-1])
    nodes_flat = np.zeros(total, np.int32)
    vecs = np.zeros((total, 3), np.int32)
    fill_distinct_all(walks, offsets, 16, nodes_flat, vecs)
    ids = np.zeros(total, np.int32)
    reps = np.zeros(total, np.int64)
    intern_rows(vecs, ids, reps)
    cap_offsets = np.array([0, 2, 4], np.int64)
    keys = np.full(4, -1, np.int32)
    vals = np.zeros(4, np.int32)
    build_dicts(nodes_flat, ids + 1, offsets, cap_offsets, keys, vals)
    dict_get_one(keys, vals, cap_offsets, 0, 1)
    queries = np.array([[0, 1]], np.int64)
    wn = np.zeros((1, 4, 3), np.int32)
    ri = np.zeros((1, 12, 2), np.int32)
    join_fill(walks, keys, vals, cap_offsets, queries, wn, ri)
