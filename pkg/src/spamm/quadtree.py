"""Quadtree matrix storage with hierarchical Frobenius norms.

A square matrix is zero-padded to ``block_size * 2**depth`` and decomposed
recursively into 2x2 quadrants down to dense ``block_size`` leaf blocks.
Every node carries the Frobenius norm of the submatrix it spans, and an
absent child stands for an exactly-zero quadrant.  The norm hierarchy
(parent norm squared equals the sum of child norms squared) is what the
multiply kernel's occlusion test relies on, so it is maintained by every
constructor in this module.

Internally a matrix is a flat, sorted table of present leaf blocks plus one
dense norm array per tier; the linked ``Node`` view is materialized lazily
for callers that want to walk the tree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadTreeMatrix",
    "Node",
    "OccupancyStats",
    "DEFAULT_BIN_EDGES",
    "build_from_dense",
    "to_dense",
    "verify_norms",
    "add_scaled",
    "trace",
    "identity",
    "occupancy_stats",
]

NORM_REL_TOL = 1e-12

# Magnitude-class bins for occupancy histograms of converged projectors.
DEFAULT_BIN_EDGES = (0.0, 1e-8, 1e-6, 1e-2, 1.0)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class Node:
    """One tree node: either 2x2 optional children or a dense leaf block."""

    tier: int
    norm: float
    children: list | None = None  # 2x2 nested list of Node | None
    block: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.block is not None


@dataclass
class OccupancyStats:
    """Histogram of native element magnitudes plus leaf fill counts."""

    bin_edges: tuple
    counts: tuple
    leaf_count: int
    null_leaf_count: int

    def to_records(self) -> list:
        return [
            {"bin_lo": self.bin_edges[b], "bin_hi": self.bin_edges[b + 1],
             "count": int(self.counts[b])}
            for b in range(len(self.counts))
        ]


class QuadTreeMatrix:
    """Square matrix padded to a power-of-two size with per-node norms.

    Instances are immutable after construction; all arithmetic produces new
    matrices, so any number of workers may read one concurrently.  Use
    :func:`build_from_dense` rather than the raw constructor.
    """

    def __init__(self, n_native: int, block_size: int, chunk_size: int,
                 block_keys: np.ndarray, block_data: np.ndarray,
                 tier_norms: list):
        self.n_native = int(n_native)
        self.block_size = int(block_size)
        self.chunk_size = int(chunk_size)
        self._block_keys = block_keys      # sorted int64, key = bi * nb + bj
        self._block_data = block_data      # (m, N_b, N_b) float64
        self._tier_norms = tier_norms      # tier_norms[t] has shape (2^t, 2^t)
        self._root: Node | None = None

    # -- basic geometry ----------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self._tier_norms) - 1

    @property
    def n_padded(self) -> int:
        return self.block_size << self.depth

    @property
    def n_blocks(self) -> int:
        """Leaf-grid edge length (n_padded / block_size)."""
        return 1 << self.depth

    @property
    def stored_leaf_count(self) -> int:
        return len(self._block_keys)

    def norm(self) -> float:
        """Frobenius norm of the whole matrix (the root node's norm)."""
        return float(self._tier_norms[0][0, 0])

    def chunk_tier(self, chunk_size: int | None = None) -> int:
        """Tier whose nodes span ``chunk_size`` rows/columns."""
        nc = self.chunk_size if chunk_size is None else int(chunk_size)
        if not _is_pow2(nc) or nc < self.block_size or nc > self.n_padded:
            raise ValueError(f"invalid chunk size {nc} for n_padded {self.n_padded}, "
                             f"block size {self.block_size}")
        return self.depth - int(np.log2(nc // self.block_size))

    # -- lazy linked-node view ----------------------------------------------

    @property
    def root(self) -> Node:
        if self._root is None:
            self._root = self._materialize()
        return self._root

    def _materialize(self) -> Node:
        nb = self.n_blocks
        present = np.zeros((nb, nb), dtype=bool)
        present.reshape(-1)[self._block_keys] = True
        tiers_present = [present]
        while tiers_present[0].shape[0] > 1:
            p = tiers_present[0]
            half = p.shape[0] // 2
            tiers_present.insert(0, p.reshape(half, 2, half, 2).any(axis=(1, 3)))

        def build(t: int, i: int, j: int) -> Node:
            norm = float(self._tier_norms[t][i, j])
            if t == self.depth:
                pos = int(np.searchsorted(self._block_keys, i * nb + j))
                block = self._block_data[pos]
                return Node(tier=t, norm=norm, block=block)
            children = [[None, None], [None, None]]
            for ci in (0, 1):
                for cj in (0, 1):
                    if tiers_present[t + 1][2 * i + ci, 2 * j + cj]:
                        children[ci][cj] = build(t + 1, 2 * i + ci, 2 * j + cj)
            return Node(tier=t, norm=norm, children=children)

        if self.depth == 0:
            # The root must exist even for an all-zero matrix.
            if len(self._block_keys):
                return build(0, 0, 0)
            zero = np.zeros((self.block_size, self.block_size))
            return Node(tier=0, norm=0.0, block=zero)
        if not present.any():
            return Node(tier=0, norm=0.0, children=[[None, None], [None, None]])
        return build(0, 0, 0)

    # -- constructors --------------------------------------------------------

    @classmethod
    def _from_blocks(cls, n_native: int, block_size: int, chunk_size: int,
                     block_keys: np.ndarray, block_data: np.ndarray,
                     depth: int) -> "QuadTreeMatrix":
        """Assemble from present leaf blocks; prunes exact-zero blocks."""
        block_keys = np.asarray(block_keys, dtype=np.int64)
        block_data = np.ascontiguousarray(block_data, dtype=np.float64)
        if len(block_keys):
            nonzero = block_data.any(axis=(1, 2))
            block_keys = block_keys[nonzero]
            block_data = block_data[nonzero]
        if len(block_keys) == 0:
            block_data = np.zeros((0, block_size, block_size))
        nb = 1 << depth
        norms2 = np.zeros((nb, nb))
        if len(block_keys):
            norms2.reshape(-1)[block_keys] = np.einsum(
                "tij,tij->t", block_data, block_data)
        tier_norms = [np.sqrt(norms2)]
        while norms2.shape[0] > 1:
            half = norms2.shape[0] // 2
            norms2 = norms2.reshape(half, 2, half, 2).sum(axis=(1, 3))
            tier_norms.insert(0, np.sqrt(norms2))
        return cls(n_native, block_size, chunk_size, block_keys, block_data,
                   tier_norms)


def _padded_geometry(n: int, block_size: int) -> tuple:
    depth = 0
    while (block_size << depth) < n:
        depth += 1
    return block_size << depth, depth


def _default_chunk_size(n_padded: int, block_size: int) -> int:
    return max(block_size, n_padded >> 3)


def build_from_dense(dense: np.ndarray, block_size: int = 16,
                     chunk_size: int | None = None) -> QuadTreeMatrix:
    """Build a quadtree matrix from a dense square array.

    The input is padded with zeros to the smallest ``block_size * 2**d``
    that fits; all-zero blocks are never stored.  Round trip through
    :func:`to_dense` is bitwise exact.
    """
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ValueError(f"input must be a square matrix, got shape {dense.shape}")
    n = dense.shape[0]
    if n < 1:
        raise ValueError("matrix must have at least one row")
    if not _is_pow2(block_size):
        raise ValueError(f"block size must be a power of two, got {block_size}")
    n_padded, depth = _padded_geometry(n, block_size)
    if chunk_size is None:
        chunk_size = _default_chunk_size(n_padded, block_size)
    if not _is_pow2(chunk_size):
        raise ValueError(f"chunk size must be a power of two, got {chunk_size}")
    if chunk_size < block_size:
        raise ValueError(f"chunk size {chunk_size} smaller than block size {block_size}")
    if chunk_size > n_padded:
        raise ValueError(f"chunk size {chunk_size} exceeds padded size {n_padded}")

    nb = n_padded // block_size
    padded = np.zeros((n_padded, n_padded))
    padded[:n, :n] = dense
    blocks = np.ascontiguousarray(
        padded.reshape(nb, block_size, nb, block_size).transpose(0, 2, 1, 3))
    flat = blocks.reshape(nb * nb, block_size, block_size)
    keys = np.flatnonzero(flat.any(axis=(1, 2))).astype(np.int64)
    data = flat[keys].copy()
    return QuadTreeMatrix._from_blocks(n, block_size, chunk_size, keys, data, depth)


def to_dense(a: QuadTreeMatrix) -> np.ndarray:
    """Expand to a dense native-size array; padding is stripped."""
    nb = a.n_blocks
    full = np.zeros((nb * nb, a.block_size, a.block_size))
    full[a._block_keys] = a._block_data
    dense = (full.reshape(nb, nb, a.block_size, a.block_size)
             .transpose(0, 2, 1, 3).reshape(a.n_padded, a.n_padded))
    return dense[:a.n_native, :a.n_native].copy()


def verify_norms(a: QuadTreeMatrix, rel_tol: float = NORM_REL_TOL) -> tuple:
    """Check every node norm against a bottom-up recomputation.

    Returns ``(ok, worst)`` where ``worst`` is the largest relative
    deviation ``|norm^2 - recomputed^2| / max(1, norm^2)`` over all nodes.
    """
    worst = 0.0

    def walk(node: Node) -> float:
        nonlocal worst
        if node.is_leaf:
            recomputed2 = float(np.einsum("ij,ij->", node.block, node.block))
        else:
            recomputed2 = 0.0
            for row in node.children:
                for child in row:
                    if child is not None:
                        recomputed2 += walk(child) ** 2
        dev = abs(node.norm ** 2 - recomputed2) / max(1.0, node.norm ** 2)
        worst = max(worst, dev)
        return node.norm

    walk(a.root)
    return worst <= rel_tol, worst


def add_scaled(alpha: float, a: QuadTreeMatrix, beta: float,
               b: QuadTreeMatrix) -> QuadTreeMatrix:
    """Return ``alpha*a + beta*b`` with norms rebuilt from scratch."""
    if (a.n_native, a.n_padded, a.block_size) != (b.n_native, b.n_padded, b.block_size):
        raise ValueError(
            f"shape/blocking mismatch: ({a.n_native}, {a.n_padded}, {a.block_size}) "
            f"vs ({b.n_native}, {b.n_padded}, {b.block_size})")
    keys = np.union1d(a._block_keys, b._block_keys)
    data = np.zeros((len(keys), a.block_size, a.block_size))
    data[np.searchsorted(keys, a._block_keys)] = alpha * a._block_data
    data[np.searchsorted(keys, b._block_keys)] += beta * b._block_data
    return QuadTreeMatrix._from_blocks(a.n_native, a.block_size, a.chunk_size,
                                       keys, data, a.depth)


def trace(a: QuadTreeMatrix) -> float:
    """Sum of the native diagonal (padding contributes exact zeros)."""
    nb = a.n_blocks
    diag_keys = np.arange(nb, dtype=np.int64) * nb + np.arange(nb)
    pos = np.searchsorted(a._block_keys, diag_keys)
    pos = pos[pos < len(a._block_keys)]
    hit = pos[np.isin(a._block_keys[pos], diag_keys)]
    if len(hit) == 0:
        return 0.0
    return float(np.einsum("tii->", a._block_data[hit]))


def identity(n: int, block_size: int = 16,
             chunk_size: int | None = None) -> QuadTreeMatrix:
    """Identity on the native range; off-diagonal quadrants stay null."""
    if n < 1:
        raise ValueError("identity needs n >= 1")
    n_padded, depth = _padded_geometry(n, block_size)
    nb = n_padded // block_size
    n_diag = (n + block_size - 1) // block_size
    keys = (np.arange(n_diag, dtype=np.int64) * nb + np.arange(n_diag))
    data = np.zeros((n_diag, block_size, block_size))
    for b in range(n_diag):
        fill = min(block_size, n - b * block_size)
        data[b, :fill, :fill] = np.eye(fill)
    if chunk_size is None:
        chunk_size = _default_chunk_size(n_padded, block_size)
    return QuadTreeMatrix._from_blocks(n, block_size, chunk_size, keys, data, depth)


def occupancy_stats(a: QuadTreeMatrix, bin_edges=None) -> OccupancyStats:
    """Histogram native element magnitudes into half-open bins.

    Bins follow ``numpy.histogram`` semantics: ``[e0, e1), ..., [e_n-1, e_n]``
    with the last bin closed.  The default edges are the magnitude classes
    used for density-matrix occupancy plots.
    """
    edges = DEFAULT_BIN_EDGES if bin_edges is None else tuple(float(e) for e in bin_edges)
    if len(edges) < 2 or any(edges[i] >= edges[i + 1] for i in range(len(edges) - 1)):
        raise ValueError(f"bin edges must be strictly ascending, got {edges}")
    dense = to_dense(a)
    counts, _ = np.histogram(np.abs(dense), bins=np.asarray(edges))
    return OccupancyStats(
        bin_edges=edges,
        counts=tuple(int(c) for c in counts),
        leaf_count=a.stored_leaf_count,
        null_leaf_count=a.n_blocks * a.n_blocks - a.stored_leaf_count,
    )
