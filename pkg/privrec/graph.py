"""
Immutable undirected social graph.

The graph is stored CSR-style: ``indptr[u]:indptr[u + 1]`` slices the sorted
neighbour ids of node ``u`` out of ``indices``. Raw labels from the input file
are remapped to dense ids ``0..n-1`` (in ascending raw-label order) and kept in
``labels`` so reports can refer back to them.

Supported inputs:
- SNAP edge list (``.txt`` or any other extension)
- gzip-compressed SNAP edge list (``.gz``)
- binary cache written by :func:`write_graph_cache` (``.prgc``)
"""

from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import IO, Any, Dict, Iterable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import (
    EdgeListParseError,
    GraphCacheError,
    NodeDomainError,
    PreconditionError,
)

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"PRGC"
CACHE_VERSION = 1
CACHE_SUFFIX = ".prgc"
_CACHE_HEADER = struct.Struct("<4sHIQ")
_LABEL_MIN, _LABEL_MAX = int(np.iinfo(np.int64).min), int(np.iinfo(np.int64).max)


class FlipDirection(str, Enum):
    ADD = "add"
    REMOVE = "remove"


@dataclass(frozen=True)
class EdgeFlip:
    """Addition or removal of the single undirected edge ``(u, v)``."""

    u: int
    v: int
    direction: FlipDirection

    def __post_init__(self) -> None:
        object.__setattr__(self, "u", int(self.u))
        object.__setattr__(self, "v", int(self.v))
        object.__setattr__(self, "direction", FlipDirection(self.direction))
        if self.u == self.v:
            raise PreconditionError(f"Edge flip endpoints must differ, got ({self.u}, {self.v})")

    def inverse(self) -> "EdgeFlip":
        other = FlipDirection.REMOVE if self.direction is FlipDirection.ADD else FlipDirection.ADD
        return EdgeFlip(self.u, self.v, other)


def _build_csr(n: int, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fold (u, v) pairs into sorted symmetric CSR arrays, dropping self-loops and duplicates."""
    indptr = np.zeros(n + 1, dtype=np.int64)
    if n == 0 or u.size == 0:
        return indptr, np.empty(0, dtype=np.int64)

    keep = u != v
    u, v = u[keep], v[keep]
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    keys = np.unique(lo * n + hi)
    lo, hi = keys // n, keys % n

    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Graph:
    """
    Immutable undirected simple graph with dense node ids.

    Use :meth:`from_edges` or :func:`load_edge_list` rather than building the
    CSR arrays by hand. Instances are safe to share across worker threads.

    Parameters
    ----------
    indptr : np.ndarray
        Offsets of length ``n + 1``.
    indices : np.ndarray
        Concatenated sorted neighbour lists, length ``2 * m``.
    labels : np.ndarray
        Raw label of every node id, length ``n``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        indptr = np.array(self.indptr, dtype=np.int64)
        indices = np.array(self.indices, dtype=np.int64)
        labels = np.array(self.labels, dtype=np.int64)
        if indptr.ndim != 1 or indptr.size < 1:
            raise PreconditionError("indptr must be a 1-d array of length n + 1")
        if labels.size != indptr.size - 1:
            raise PreconditionError(
                f"Expected {indptr.size - 1} labels, got {labels.size}"
            )
        if indptr[0] != 0 or indptr[-1] != indices.size:
            raise PreconditionError("indptr does not match the neighbour array")
        if np.unique(labels).size != labels.size:
            raise PreconditionError("raw labels must be unique")
        for arr in (indptr, indices, labels):
            arr.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Union[Iterable[tuple[int, int]], np.ndarray],
        labels: Optional[Iterable[int]] = None,
    ) -> "Graph":
        """
        Build a graph on ``n`` nodes from undirected ``(u, v)`` pairs.

        Reversed duplicates collapse and self-loops are dropped, the same
        folding :func:`load_edge_list` applies. ``labels`` defaults to the ids
        themselves.

        Examples
        --------
        >>> g = Graph.from_edges(3, [(0, 1), (1, 2)])
        >>> g.m
        2
        """
        if n < 0:
            raise PreconditionError(f"Node count must be nonnegative, got {n}")
        pairs = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        pairs = pairs.reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise NodeDomainError(f"Edge endpoint outside [0, {n})")
        indptr, indices = _build_csr(n, pairs[:, 0], pairs[:, 1])
        label_array = np.arange(n, dtype=np.int64) if labels is None else np.asarray(list(labels), dtype=np.int64)
        return cls(indptr, indices, label_array)

    # ------------------------------------------------------------------
    # Basic queries
    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.indptr.size - 1)

    @property
    def m(self) -> int:
        return int(self.indices.size // 2)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.diff(self.indptr)
        deg.setflags(write=False)
        return deg

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    def check_node(self, u: int) -> int:
        """Return ``u`` as an int, raising :class:`NodeDomainError` if it is not a node id."""
        u = int(u)
        if u < 0 or u >= self.n:
            raise NodeDomainError(f"Node id {u} outside [0, {self.n})")
        return u

    def degree(self, u: int) -> int:
        u = self.check_node(u)
        return int(self.indptr[u + 1] - self.indptr[u])

    def neighbors(self, u: int) -> np.ndarray:
        """Sorted neighbour ids of ``u`` (read-only view)."""
        u = self.check_node(u)
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.neighbors(u)
        v = self.check_node(v)
        pos = np.searchsorted(nbrs, v)
        return bool(pos < nbrs.size and nbrs[pos] == v)

    def edges(self) -> np.ndarray:
        """All undirected edges as an ``(m, 2)`` array with ``u < v``, sorted."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        upper = rows < self.indices
        return np.column_stack([rows[upper], self.indices[upper]])

    # ------------------------------------------------------------------
    # Labels
    # ------------------------------------------------------------------
    @cached_property
    def _label_index(self) -> Dict[int, int]:
        return {int(label): i for i, label in enumerate(self.labels)}

    def node_of(self, raw_label: int) -> int:
        """Dense id of a raw input label."""
        try:
            return self._label_index[int(raw_label)]
        except KeyError:
            raise NodeDomainError(f"Raw label {raw_label} is not in the graph") from None

    def raw_label(self, u: int) -> int:
        return int(self.labels[self.check_node(u)])

    # ------------------------------------------------------------------
    # Derived structures
    # ------------------------------------------------------------------
    @cached_property
    def _adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def adjacency_matrix(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency matrix as scipy CSR (float64, shared, do not mutate)."""
        return self._adjacency

    def relabel(self, permutation: Union[Iterable[int], np.ndarray]) -> "Graph":
        """
        Isomorphic copy in which node ``v`` becomes ``permutation[v]``.

        Raw labels travel with their nodes.
        """
        perm = np.asarray(list(permutation) if not isinstance(permutation, np.ndarray) else permutation, dtype=np.int64)
        if perm.shape != (self.n,) or not np.array_equal(np.sort(perm), np.arange(self.n)):
            raise PreconditionError("permutation must be a bijection of the node ids")
        new_labels = np.empty(self.n, dtype=np.int64)
        new_labels[perm] = self.labels
        return Graph.from_edges(self.n, perm[self.edges()], labels=new_labels)

    def validate(self) -> None:
        """
        Check symmetry, absence of self-loops and duplicate neighbours.

        Raises
        ------
        PreconditionError
            If any invariant is violated.
        """
        n = self.n
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise PreconditionError("neighbour id outside the node range")
        rows = np.repeat(np.arange(n, dtype=np.int64), self.degrees)
        if np.any(rows == self.indices):
            raise PreconditionError("graph contains a self-loop")
        forward = rows * n + self.indices
        if forward.size and np.any(np.diff(forward) <= 0):
            raise PreconditionError("neighbour lists are unsorted or contain duplicates")
        backward = np.sort(self.indices * n + rows)
        if not np.array_equal(forward, backward):
            raise PreconditionError("adjacency is not symmetric")

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"


# ----------------------------------------------------------------------
# Loading
# ----------------------------------------------------------------------
def load_edge_list(source: Iterable[Union[bytes, str]]) -> Graph:
    """
    Parse a SNAP-style edge list into an undirected graph.

    Lines starting with ``#`` are comments and blank lines are skipped. Every
    other line holds two whitespace-separated integer labels of a directed
    pair; the pair is folded into one undirected edge, reversed duplicates
    collapse and self-loops are dropped. A node that only appears in a
    self-loop is kept as an isolated node.

    Parameters
    ----------
    source : iterable of bytes or str
        A binary or text stream (anything yielding lines).

    Returns
    -------
    Graph

    Raises
    ------
    EdgeListParseError
        On a line with the wrong number of tokens or a non-integer token.

    Examples
    --------
    >>> import io
    >>> g = load_edge_list(io.BytesIO(b"1 2\\n2 1\\n1 1\\n"))
    >>> (g.n, g.m)
    (2, 1)
    """
    src: list[int] = []
    dst: list[int] = []
    for line_number, raw in enumerate(source, start=1):
        if isinstance(raw, (bytes, bytearray)):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise EdgeListParseError(line_number, "line is not valid UTF-8") from None
        else:
            line = raw
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 2:
            raise EdgeListParseError(
                line_number, f"expected 2 labels, found {len(tokens)}", line
            )
        try:
            a, b = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise EdgeListParseError(line_number, "labels must be integers", line) from None
        if not (_LABEL_MIN <= a <= _LABEL_MAX and _LABEL_MIN <= b <= _LABEL_MAX):
            raise EdgeListParseError(line_number, "label outside the 64-bit range", line)
        src.append(a)
        dst.append(b)

    if not src:
        return Graph.from_edges(0, [])

    raw_ids = np.asarray(src + dst, dtype=np.int64)
    labels, inverse = np.unique(raw_ids, return_inverse=True)
    inverse = inverse.astype(np.int64).ravel()
    half = len(src)
    indptr, indices = _build_csr(labels.size, inverse[:half], inverse[half:])
    return Graph(indptr, indices, labels)


def read_graph(path: Union[str, Path]) -> Graph:
    """
    Load a graph, dispatching on the file extension.

    ``.prgc`` is read as a binary cache, ``.gz`` as a gzip-compressed edge
    list, anything else as a plain edge list.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Graph file not found: {path}")

    logger.info(f"📥 Loading graph from {path}")
    suffix = path.suffix.lower()
    if suffix == CACHE_SUFFIX:
        g = read_graph_cache(path)
    else:
        with open_text_source(path) as fh:
            g = load_edge_list(fh)
    logger.info(f"✅ Loaded graph: {g.n:,} nodes, {g.m:,} edges")
    return g


def write_graph_cache(g: Graph, path: Union[str, Path]) -> None:
    """
    Write ``g`` in the little-endian binary cache format.

    Layout: magic ``PRGC``, uint16 version, uint32 n, uint64 m,
    int64 labels[n], uint32 offsets[n + 1], uint32 neighbours[2m].
    """
    path = Path(path)
    if g.indices.size >= 2**32:
        raise GraphCacheError("graph too large for 32-bit cache offsets")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, g.n, g.m))
        fh.write(g.labels.astype("<i8").tobytes())
        fh.write(g.indptr.astype("<u4").tobytes())
        fh.write(g.indices.astype("<u4").tobytes())
    logger.info(f"💾 Wrote graph cache {path} ({g.n:,} nodes, {g.m:,} edges)")


def read_graph_cache(path: Union[str, Path]) -> Graph:
    """
    Read a binary cache written by :func:`write_graph_cache`.

    Raises
    ------
    GraphCacheError
        On wrong magic, unknown version, truncation or inconsistent arrays.
    """
    data = Path(path).read_bytes()
    if len(data) < _CACHE_HEADER.size:
        raise GraphCacheError(f"{path}: truncated header")
    magic, version, n, m = _CACHE_HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise GraphCacheError(f"{path}: bad magic {magic!r}")
    if version != CACHE_VERSION:
        raise GraphCacheError(f"{path}: unsupported cache version {version}")

    expected = _CACHE_HEADER.size + 8 * n + 4 * (n + 1) + 8 * m
    if len(data) != expected:
        raise GraphCacheError(f"{path}: expected {expected} bytes, found {len(data)}")

    offset = _CACHE_HEADER.size
    labels = np.frombuffer(data, dtype="<i8", count=n, offset=offset)
    offset += 8 * n
    indptr = np.frombuffer(data, dtype="<u4", count=n + 1, offset=offset)
    offset += 4 * (n + 1)
    indices = np.frombuffer(data, dtype="<u4", count=2 * m, offset=offset)

    try:
        g = Graph(indptr.astype(np.int64), indices.astype(np.int64), labels.astype(np.int64))
        if np.any(np.diff(g.indptr) < 0):
            raise PreconditionError("offsets are not monotone")
        g.validate()
    except PreconditionError as exc:
        raise GraphCacheError(f"{path}: {exc}") from exc
    return g


def graph_stats(g: Graph) -> Dict[str, Any]:
    """
    Summary used by the ``stats`` command.

    Returns
    -------
    dict
        ``{"nodes", "edges", "max_degree", "degree_histogram"}``; the
        histogram maps degree (as a string key) to node count and omits
        empty degrees.
    """
    counts = np.bincount(g.degrees) if g.n else np.empty(0, dtype=np.int64)
    histogram = {str(d): int(c) for d, c in enumerate(counts) if c}
    return {
        "nodes": g.n,
        "edges": g.m,
        "max_degree": g.max_degree,
        "degree_histogram": histogram,
    }


# ----------------------------------------------------------------------
# Neighbourhood primitives
# ----------------------------------------------------------------------
def common_neighbor_count(g: Graph, u: int, v: int) -> int:
    """|N(u) ∩ N(v)|."""
    return int(np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True).size)


def candidate_set(g: Graph, r: int) -> np.ndarray:
    """Nodes that may be recommended to ``r``: everything except ``r`` and its neighbours, ascending."""
    r = g.check_node(r)
    mask = np.ones(g.n, dtype=bool)
    mask[r] = False
    mask[g.neighbors(r)] = False
    return np.flatnonzero(mask)


def apply_flip(g: Graph, flip: EdgeFlip) -> Graph:
    """
    Return a copy of ``g`` with edge ``(flip.u, flip.v)`` added or removed.

    Raises
    ------
    PreconditionError
        If an added edge already exists or a removed edge does not.
    """
    g.check_node(flip.u)
    g.check_node(flip.v)
    present = g.has_edge(flip.u, flip.v)
    edges = g.edges()
    if flip.direction is FlipDirection.ADD:
        if present:
            raise PreconditionError(f"Cannot add existing edge ({flip.u}, {flip.v})")
        edges = np.vstack([edges, [[flip.u, flip.v]]])
    else:
        if not present:
            raise PreconditionError(f"Cannot remove missing edge ({flip.u}, {flip.v})")
        lo, hi = min(flip.u, flip.v), max(flip.u, flip.v)
        edges = edges[~((edges[:, 0] == lo) & (edges[:, 1] == hi))]
    return Graph.from_edges(g.n, edges, labels=g.labels)


def open_text_source(path: Union[str, Path]) -> IO[bytes]:
    """Open an edge list for streaming, transparently decompressing ``.gz``."""
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix.lower() == ".gz" else open(path, "rb")
