"""Graph ingestion and query splitting.

Graphs are immutable, undirected, simple (no self-loops, no parallel
edges), and stored in compressed sparse row form: ``idxptr`` of length
``num_nodes + 1`` plus a flat, per-node-sorted ``indices`` array. Arbitrary
external node ids are densely remapped at ingestion and the mapping rides
along in ``id_map``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ._seeds import derive_seed

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Raised for malformed edge-list, hyperedge, or query files."""


@dataclass(frozen=True)
class Query:
    """An ordered node set to score, with an optional binary label."""

    nodes: tuple[int, ...]
    label: Optional[int] = None

    def __post_init__(self):
        nodes = tuple(int(v) for v in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if len(nodes) < 1:
            raise ValueError("query needs at least one node")
        if len(set(nodes)) != len(nodes):
            raise ValueError(f"duplicate nodes in query {nodes}")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"query label must be 0 or 1, got {self.label}")

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph in CSR form."""

    num_nodes: int
    idxptr: np.ndarray
    indices: np.ndarray
    node_features: Optional[np.ndarray] = None
    id_map: Optional[dict[int, int]] = None

    def __post_init__(self):
        self.idxptr.setflags(write=False)
        self.indices.setflags(write=False)
        if self.node_features is not None:
            self.node_features.setflags(write=False)

    @classmethod
    def from_edges(
        cls,
        pairs: np.ndarray,
        num_nodes: int,
        node_features: Optional[np.ndarray] = None,
        id_map: Optional[dict[int, int]] = None,
    ) -> "Graph":
        """Build a Graph from an integer edge array of shape [E, 2].

        Self-loops and duplicate edges are dropped (with a logged count);
        both directions of every surviving edge are materialized.
        """
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
            raise ValueError("edge endpoint out of range")
        n = int(num_nodes)
        loops = int(np.count_nonzero(pairs[:, 0] == pairs[:, 1])) if pairs.size else 0
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        # canonical undirected key for dedup; n < 2^31 keeps u*n+v in int64
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        canon = np.unique(lo * n + hi)
        dupes = pairs.shape[0] - canon.shape[0]
        if loops or dupes:
            logger.info("dropped %d self-loops and %d duplicate edges", loops, dupes)
        lo, hi = canon // n, canon % n
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.unique(src * n + dst)  # sorts by (src, dst)
        idxptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount((order // n).astype(np.int64), minlength=n), out=idxptr[1:])
        indices = (order % n).astype(np.int32)
        return cls(n, idxptr, indices, node_features, id_map)

    @property
    def num_edges(self) -> int:
        return self.indices.shape[0] // 2

    def degree(self, u: int) -> int:
        return int(self.idxptr[u + 1] - self.idxptr[u])

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.idxptr[u] : self.idxptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.shape[0] and row[i] == v)

    def edge_array(self) -> np.ndarray:
        """Canonical [num_edges, 2] array with u < v, sorted lexicographically."""
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.idxptr))
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep].astype(np.int64)])


@dataclass
class QuerySplit:
    """Inductive link-query split: positives per phase, negatives for the
    evaluation phases, and the walk graph with training-query edges removed."""

    train_pos: list[Query]
    valid_pos: list[Query]
    test_pos: list[Query]
    valid_neg: list[list[Query]] = field(default_factory=list)
    test_neg: list[list[Query]] = field(default_factory=list)
    train_graph: Optional[Graph] = None


def _parse_int(token: str, lineno: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise GraphFormatError(f"line {lineno}: expected integer, got {token!r}") from None
    if value < 0:
        raise GraphFormatError(f"line {lineno}: node ids must be non-negative, got {value}")
    return value


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def load_edge_list(lines: Iterable[str], undirected: bool = True) -> Graph:
    """Parse a whitespace-separated ``u v`` edge list into a Graph.

    '#' starts a comment. External ids are densely remapped in order of
    first appearance; the mapping is kept in ``Graph.id_map``. With
    ``undirected=False`` the input must already list both directions of
    every edge (the graph is validated, not symmetrized).
    """
    id_map: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    for lineno, raw in enumerate(lines, 1):
        line = _strip_comment(raw)
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphFormatError(f"line {lineno}: expected 'u v', got {raw.strip()!r}")
        u, v = (_parse_int(t, lineno) for t in tokens)
        for orig in (u, v):
            if orig not in id_map:
                id_map[orig] = len(id_map)
        pairs.append((id_map[u], id_map[v]))
    if not id_map:
        raise GraphFormatError("empty edge list")
    arr = np.array(pairs, dtype=np.int64)
    if not undirected:
        fwd = set(map(tuple, arr.tolist()))
        missing = [e for e in fwd if (e[1], e[0]) not in fwd and e[0] != e[1]]
        if missing:
            raise GraphFormatError(f"directed input is not symmetric, e.g. edge {missing[0]}")
    return Graph.from_edges(arr, len(id_map), id_map=id_map)


def project_hyperedges(lines: Iterable[str]) -> Graph:
    """Project hyperedges (one per line, space-separated ids) onto the union
    of their pairwise clique edges."""
    id_map: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    seen_any = False
    for lineno, raw in enumerate(lines, 1):
        line = _strip_comment(raw)
        if not line:
            continue
        members = []
        for token in line.split():
            orig = _parse_int(token, lineno)
            if orig not in id_map:
                id_map[orig] = len(id_map)
            dense = id_map[orig]
            if dense not in members:
                members.append(dense)
        if len(members) < 2:
            raise GraphFormatError(f"line {lineno}: hyperedge needs at least 2 distinct nodes")
        seen_any = True
        pairs.extend(itertools.combinations(members, 2))
    if not seen_any:
        raise GraphFormatError("empty hyperedge list")
    return Graph.from_edges(np.array(pairs, dtype=np.int64), len(id_map), id_map=id_map)


def remove_edges(g: Graph, edges: Sequence[tuple[int, int]]) -> Graph:
    """Return a new Graph without the listed edges (both directions).

    Every listed edge must be present; a missing one raises with the pair
    named. The input graph is untouched.
    """
    n = g.num_nodes
    drop = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if not g.has_edge(u, v):
            raise ValueError(f"edge ({u}, {v}) not present in graph")
        drop.add(min(u, v) * n + max(u, v))
    if not drop:
        return Graph(n, g.idxptr.copy(), g.indices.copy(), g.node_features, g.id_map)
    arr = g.edge_array()
    keys = arr[:, 0] * n + arr[:, 1]
    keep = ~np.isin(keys, np.fromiter(drop, dtype=np.int64, count=len(drop)))
    return Graph.from_edges(arr[keep], n, g.node_features, g.id_map)


def _sample_nonedge_pair(g: Graph, rng: np.random.Generator, budget: list[int]) -> tuple[int, int]:
    while budget[0] > 0:
        budget[0] -= 1
        u, v = rng.integers(0, g.num_nodes, size=2)
        if u != v and not g.has_edge(int(u), int(v)):
            return int(u), int(v)
    raise ValueError("graph too small or too dense to supply requested negatives")


def split_link_queries(g: Graph, train_frac: float, k_neg: int, seed: int) -> QuerySplit:
    """Partition the edge set into train/valid/test positive link queries.

    Training positives are removed from the returned walk graph so the
    sampler cannot read the training answers off the structure. Each
    valid/test positive is paired with ``k_neg`` uniform node pairs rejected
    against the full edge set.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    if k_neg < 1:
        raise ValueError("k_neg must be >= 1")
    edges = g.edge_array()
    n_edges = edges.shape[0]
    if n_edges < 2:
        raise ValueError("graph has too few edges to split")
    rng = np.random.default_rng(derive_seed(seed, "link-split"))
    perm = rng.permutation(n_edges)
    n_train = int(round(train_frac * n_edges))
    n_train = min(max(n_train, 1), n_edges - 1)
    train = edges[perm[:n_train]]
    rest = edges[perm[n_train:]]
    valid, test = rest[: rest.shape[0] // 2], rest[rest.shape[0] // 2 :]

    def as_queries(arr: np.ndarray, label: int) -> list[Query]:
        return [Query((int(u), int(v)), label) for u, v in arr]

    budget = [1000 * k_neg * max(rest.shape[0], 1)]
    valid_neg = [
        [Query(_sample_nonedge_pair(g, rng, budget), 0) for _ in range(k_neg)] for _ in valid
    ]
    test_neg = [
        [Query(_sample_nonedge_pair(g, rng, budget), 0) for _ in range(k_neg)] for _ in test
    ]
    return QuerySplit(
        train_pos=as_queries(train, 1),
        valid_pos=as_queries(valid, 1),
        test_pos=as_queries(test, 1),
        valid_neg=valid_neg,
        test_neg=test_neg,
        train_graph=remove_edges(g, [tuple(e) for e in train]),
    )


def _pick_distinct_keys(rng: np.random.Generator, n_keys: int, count: int, draw) -> np.ndarray:
    """Exactly ``count`` distinct keys; ``draw(size)`` yields candidates."""
    if count >= n_keys:
        count = n_keys
    picked = np.empty(0, dtype=np.int64)
    while picked.size < count:
        extra = draw(2 * (count - picked.size) + 16)
        picked = np.unique(np.concatenate([picked, extra]))
        if picked.size >= n_keys:
            break
    if picked.size > count:
        picked = picked[rng.permutation(picked.size)[:count]]
    return picked


def generate_sbm(
    blocks: int, nodes_per_block: int, p_in: float, p_out: float, seed: int
) -> Graph:
    """Undirected stochastic block model, deterministic given the seed.

    Edge counts per block pair are drawn from the exact binomial, then that
    many distinct pairs are picked, so the construction stays O(edges) even
    for large sparse graphs.
    """
    if blocks < 1 or nodes_per_block < 1:
        raise ValueError("blocks and nodes_per_block must be >= 1")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1]")
    nb = nodes_per_block
    n = blocks * nb
    rng = np.random.default_rng(derive_seed(seed, "sbm"))
    chunks: list[np.ndarray] = []

    def draw_within(size: int) -> np.ndarray:
        a = rng.integers(0, nb, size=size)
        b = rng.integers(0, nb, size=size)
        ok = a != b
        lo = np.minimum(a[ok], b[ok])
        hi = np.maximum(a[ok], b[ok])
        return lo * nb + hi

    def draw_cross(size: int) -> np.ndarray:
        return rng.integers(0, nb, size=size) * nb + rng.integers(0, nb, size=size)

    for b in range(blocks):
        n_pairs = nb * (nb - 1) // 2
        count = int(rng.binomial(n_pairs, p_in)) if n_pairs else 0
        if count:
            if 2 * count >= n_pairs:  # dense block: enumerate instead of rejection
                lo, hi = np.triu_indices(nb, k=1)
                all_keys = lo.astype(np.int64) * nb + hi
                keys = all_keys[rng.permutation(n_pairs)[:count]]
            else:
                keys = _pick_distinct_keys(rng, n_pairs, count, draw_within)
            u = keys // nb + b * nb
            v = keys % nb + b * nb
            chunks.append(np.column_stack([u, v]))
    for bi in range(blocks):
        for bj in range(bi + 1, blocks):
            n_pairs = nb * nb
            count = int(rng.binomial(n_pairs, p_out))
            if count:
                if 2 * count >= n_pairs:
                    keys = rng.permutation(n_pairs)[:count].astype(np.int64)
                else:
                    keys = _pick_distinct_keys(rng, n_pairs, count, draw_cross)
                u = keys // nb + bi * nb
                v = keys % nb + bj * nb
                chunks.append(np.column_stack([u, v]))
    pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    return Graph.from_edges(pairs, n)


def read_query_file(lines: Iterable[str], labeled: bool = True) -> list[Query]:
    """Parse queries, one per line: ``label u v [w ...]`` when labeled,
    ``u v [w ...]`` otherwise. Labels must be 0 or 1."""
    queries: list[Query] = []
    for lineno, raw in enumerate(lines, 1):
        line = _strip_comment(raw)
        if not line:
            continue
        tokens = line.split()
        label: Optional[int] = None
        if labeled:
            if tokens[0] not in ("0", "1"):
                raise GraphFormatError(f"line {lineno}: label must be 0 or 1, got {tokens[0]!r}")
            label = int(tokens[0])
            tokens = tokens[1:]
        if len(tokens) < 2:
            raise GraphFormatError(f"line {lineno}: query needs at least 2 nodes")
        nodes = tuple(_parse_int(t, lineno) for t in tokens)
        try:
            queries.append(Query(nodes, label))
        except ValueError as exc:
            raise GraphFormatError(f"line {lineno}: {exc}") from None
    return queries
