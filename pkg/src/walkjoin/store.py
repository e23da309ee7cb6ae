"""Walk-based subgraph storage.

One entry per node (walk matrix + open-addressing dictionary mapping node
id -> RPE id) plus a single global table of deduplicated positional count
vectors. RPE id 0 is reserved for the all-zero vector, so a lookup of a
node that never appears in an anchor's walks needs no branching downstream.

The per-node dictionaries live in three packed arrays (power-of-two
capacity per node, linear probing, load factor <= 0.5), which keeps lookups
average O(1), makes the whole store a handful of flat buffers, and lets the
join kernel probe them without boxing.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional, Sequence, Union

import numpy as np

from . import _kernels

_MAGIC = b"SURL"
_VERSION = 1


class StoreFormatError(RuntimeError):
    """Raised when a store file has the wrong magic, version, or length."""


@dataclass
class RpeTable:
    """Deduplicated positional count vectors; row 0 is the zero sentinel."""

    vectors: np.ndarray  # [T, m+1] int32

    def __post_init__(self):
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, idx):
        return self.vectors[idx]


@dataclass
class NodeEntry:
    """One node's walks and its node-id -> RPE-id dictionary."""

    anchor: int
    walks: np.ndarray  # [M, m+1]
    dict: dict[int, int]


@dataclass
class SubgraphStore:
    """Per-node walk sets, per-node dictionaries, and the shared RPE table."""

    num_nodes: int
    num_walks: int
    walk_steps: int
    seed: int
    walks: np.ndarray  # [n, M, m+1] int32
    table: RpeTable
    dict_offsets: np.ndarray  # [n+1] int64 capacity offsets, powers of two per node
    dict_keys: np.ndarray  # int32, -1 per empty slot
    dict_vals: np.ndarray  # int32 RPE ids
    id_map: Optional[dict[int, int]] = None

    def __post_init__(self):
        for arr in (self.walks, self.dict_offsets, self.dict_keys, self.dict_vals):
            arr.setflags(write=False)

    @property
    def walk_slot_count(self) -> int:
        return self.num_nodes * self.num_walks * (self.walk_steps + 1)

    def entry(self, u: int) -> NodeEntry:
        self._check_node(u)
        lo, hi = self.dict_offsets[u], self.dict_offsets[u + 1]
        keys = self.dict_keys[lo:hi]
        vals = self.dict_vals[lo:hi]
        filled = keys != -1
        return NodeEntry(
            anchor=u,
            walks=self.walks[u],
            dict={int(k): int(v) for k, v in zip(keys[filled], vals[filled])},
        )

    def byte_sizes(self) -> dict[str, int]:
        sizes = {
            "walks": self.walks.nbytes,
            "table": self.table.vectors.nbytes,
            "dicts": self.dict_keys.nbytes + self.dict_vals.nbytes + self.dict_offsets.nbytes,
        }
        sizes["total"] = sum(sizes.values())
        return sizes

    def _check_node(self, u: int):
        if not 0 <= u < self.num_nodes:
            raise ValueError(f"node id {u} out of range [0, {self.num_nodes})")


def intern_vectors(vecs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deduplicate count vectors in scan order.

    Returns (ids, table): ids are 1-based (0 is the reserved zero vector,
    prepended to the table), in first-occurrence order of the input rows.
    """
    vecs = np.ascontiguousarray(vecs, dtype=np.int32)
    total, width = vecs.shape
    ids = np.empty(total, dtype=np.int32)
    reps = np.empty(max(total, 1), dtype=np.int64)
    n_unique = _kernels.intern_rows(vecs, ids, reps) if total else 0
    table = np.zeros((n_unique + 1, width), dtype=np.int32)
    if n_unique:
        table[1:] = vecs[reps[:n_unique]]
    return ids + 1, table


def dict_capacities(counts: np.ndarray) -> np.ndarray:
    """Smallest power of two >= max(2, 2*count) per node (load <= 0.5)."""
    need = np.maximum(2 * counts.astype(np.int64), 2)
    caps = np.int64(1) << np.ceil(np.log2(need)).astype(np.int64)
    caps[caps < need] <<= 1
    shrink = (caps >> 1) >= need
    caps[shrink] >>= 1
    return caps


def dedup_and_reindex(raw_maps: Sequence) -> tuple[RpeTable, list[dict[int, int]]]:
    """Build the deduplicated table and per-node id dictionaries from raw
    per-node positional count maps (scanned in ascending node order, entries
    in their recorded first-appearance order)."""
    vec_rows = []
    node_lists = []
    width = None
    for raw in raw_maps:
        entries = raw.entries if hasattr(raw, "entries") else raw
        nodes = list(entries.keys())
        node_lists.append(nodes)
        for x in nodes:
            vec = np.asarray(entries[x], dtype=np.int32)
            width = vec.shape[0] if width is None else width
            vec_rows.append(vec)
    if width is None:
        raise ValueError("no raw maps given")
    ids, table = intern_vectors(np.array(vec_rows, dtype=np.int32))
    dicts: list[dict[int, int]] = []
    pos = 0
    for nodes in node_lists:
        dicts.append({int(x): int(ids[pos + i]) for i, x in enumerate(nodes)})
        pos += len(nodes)
    return RpeTable(table), dicts


def get_rpe_id(store: SubgraphStore, u: int, x: int) -> int:
    """RPE id of node x relative to anchor u; 0 when x never shows up in
    u's walks. Only the anchor id is range-checked."""
    store._check_node(u)
    return int(_kernels.dict_get_one(store.dict_keys, store.dict_vals, store.dict_offsets, u, int(x)))


def _write_store(store: SubgraphStore, fh: BinaryIO):
    n = store.num_nodes
    id_map_len = n if store.id_map is not None else 0
    fh.write(_MAGIC)
    fh.write(
        struct.pack(
            "<IIIQQQQ",
            _VERSION,
            store.num_walks,
            store.walk_steps,
            store.seed & 0xFFFFFFFFFFFFFFFF,
            n,
            len(store.table),
            id_map_len,
        )
    )
    fh.write(store.table.vectors.tobytes())
    caps = np.diff(store.dict_offsets)
    for u in range(n):
        fh.write(struct.pack("<I", int(caps[u])))
        fh.write(store.walks[u].tobytes())
        lo, hi = store.dict_offsets[u], store.dict_offsets[u + 1]
        fh.write(store.dict_keys[lo:hi].tobytes())
        fh.write(store.dict_vals[lo:hi].tobytes())
    if id_map_len:
        origs = np.empty(n, dtype=np.int64)
        for orig, dense in store.id_map.items():
            origs[dense] = orig
        fh.write(origs.tobytes())


def save_store(store: SubgraphStore, path) -> None:
    """Serialize to the versioned little-endian binary format."""
    buf = io.BytesIO()
    _write_store(store, buf)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_store(path) -> SubgraphStore:
    """Load a store written by save_store; magic/version/length are checked."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise StoreFormatError(f"bad magic {data[:4]!r}, expected {_MAGIC!r}")
    header_fmt = "<IIIQQQQ"
    header_size = 4 + struct.calcsize(header_fmt)
    if len(data) < header_size:
        raise StoreFormatError("truncated store file (header)")
    version, num_walks, walk_steps, seed, n, table_len, id_map_len = struct.unpack_from(
        header_fmt, data, 4
    )
    if version != _VERSION:
        raise StoreFormatError(f"unsupported store version {version}, expected {_VERSION}")
    width = walk_steps + 1
    off = header_size

    def take(dtype, count, shape=None):
        nonlocal off
        nbytes = np.dtype(dtype).itemsize * count
        if off + nbytes > len(data):
            raise StoreFormatError("truncated store file")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off).copy()
        off += nbytes
        return arr if shape is None else arr.reshape(shape)

    table = take(np.int32, table_len * width, (table_len, width))
    walks = np.empty((n, num_walks, width), dtype=np.int32)
    caps = np.empty(n, dtype=np.int64)
    key_chunks = []
    val_chunks = []
    for u in range(n):
        (cap,) = struct.unpack_from("<I", data, off)
        off += 4
        caps[u] = cap
        walks[u] = take(np.int32, num_walks * width, (num_walks, width))
        key_chunks.append(take(np.int32, cap))
        val_chunks.append(take(np.int32, cap))
    id_map = None
    if id_map_len:
        origs = take(np.int64, id_map_len)
        id_map = {int(orig): dense for dense, orig in enumerate(origs)}
    if off != len(data):
        raise StoreFormatError(f"store file has {len(data) - off} trailing bytes")
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(caps, out=offsets[1:])
    return SubgraphStore(
        num_nodes=int(n),
        num_walks=int(num_walks),
        walk_steps=int(walk_steps),
        seed=int(seed),
        walks=walks,
        table=RpeTable(table),
        dict_offsets=offsets,
        dict_keys=np.concatenate(key_chunks) if key_chunks else np.empty(0, np.int32),
        dict_vals=np.concatenate(val_chunks) if val_chunks else np.empty(0, np.int32),
        id_map=id_map,
    )
