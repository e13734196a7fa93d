"""Hilbert-curve ordering of 3-D point sets and locality metrics.

Points are quantized onto a ``2**order`` lattice over their bounding box
and sorted by 3-D Hilbert key, so spatially close points land on nearby
matrix rows.  Each point owns a contiguous run of rows (its multiplicity,
e.g. basis functions per molecule), and permutations move those runs as
units.

The curve is the transpose-based construction of Skilling (one reflection
/ exchange pass per bit, then Gray coding); encode and decode round-trip
exactly and consecutive keys are lattice neighbors. Frozen test vectors
pin the variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadtree import QuadTreeMatrix, build_from_dense, to_dense

__all__ = ["PointCloud", "LocalityMetric", "hilbert_index", "hilbert_decode",
           "reorder_permutation", "expand_row_permutation",
           "apply_row_permutation", "locality_metric"]


@dataclass
class PointCloud:
    """3-D points with per-point row multiplicities."""

    points: np.ndarray        # (n, 3) float
    multiplicity: np.ndarray  # (n,) positive int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.multiplicity = np.asarray(self.multiplicity, dtype=np.int64).reshape(-1)
        if len(self.points) != len(self.multiplicity):
            raise ValueError(f"{len(self.points)} points but "
                             f"{len(self.multiplicity)} multiplicities")
        if len(self.points) < 1:
            raise ValueError("point cloud must contain at least one point")
        if (self.multiplicity < 1).any():
            raise ValueError("multiplicities must be positive")

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_rows(self) -> int:
        return int(self.multiplicity.sum())


@dataclass
class LocalityMetric:
    mean_band: float
    p90_band: float
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


def hilbert_index(cell, order: int) -> int:
    """Hilbert key of lattice cell (i, j, k), each in [0, 2**order)."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    x = [int(c) for c in cell]
    if len(x) != 3:
        raise ValueError(f"expected a 3-D cell, got {cell!r}")
    side = 1 << order
    if any(c < 0 or c >= side for c in x):
        raise ValueError(f"cell {cell!r} outside [0, {side}) lattice")

    # Axes -> transpose (Skilling): reflect/exchange from the top bit down,
    # then Gray-code.
    q = 1 << (order - 1)
    while q > 1:
        p = q - 1
        for a in range(3):
            if x[a] & q:
                x[0] ^= p
            else:
                t = (x[0] ^ x[a]) & p
                x[0] ^= t
                x[a] ^= t
        q >>= 1
    for a in (1, 2):
        x[a] ^= x[a - 1]
    t = 0
    q = 1 << (order - 1)
    while q > 1:
        if x[2] & q:
            t ^= q - 1
        q >>= 1
    for a in range(3):
        x[a] ^= t

    key = 0
    for bit in range(order - 1, -1, -1):
        for a in range(3):
            key = (key << 1) | ((x[a] >> bit) & 1)
    return key


def hilbert_decode(key: int, order: int):
    """Inverse of :func:`hilbert_index`; returns the (i, j, k) cell."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if key < 0 or key >= 1 << (3 * order):
        raise ValueError(f"key {key} outside [0, 8**{order})")
    x = [0, 0, 0]
    for pos in range(3 * order):
        bit = (key >> (3 * order - 1 - pos)) & 1
        x[pos % 3] = (x[pos % 3] << 1) | bit

    # Transpose -> axes: Gray decode, then undo the reflect/exchange pass
    # from the bottom bit up.
    side = 2 << (order - 1)
    t = x[2] >> 1
    for a in (2, 1):
        x[a] ^= x[a - 1]
    x[0] ^= t
    q = 2
    while q != side:
        p = q - 1
        for a in (2, 1, 0):
            if x[a] & q:
                x[0] ^= p
            else:
                t = (x[0] ^ x[a]) & p
                x[0] ^= t
                x[a] ^= t
        q <<= 1
    return tuple(x)


def _quantize(points: np.ndarray, order: int) -> np.ndarray:
    side = 1 << order
    lo = points.min(axis=0)
    span = points.max(axis=0) - lo
    cells = np.zeros(points.shape, dtype=np.int64)
    for axis in range(3):
        if span[axis] > 0:
            scaled = (points[:, axis] - lo[axis]) / span[axis] * side
            cells[:, axis] = np.clip(scaled.astype(np.int64), 0, side - 1)
    return cells


def reorder_permutation(cloud: PointCloud, order: int = 10) -> np.ndarray:
    """Hilbert-sorted point permutation (ties broken by input index).

    Returns ``perm`` with ``perm[new] = old``; expand with
    :func:`expand_row_permutation` to act on matrix rows.
    """
    cells = _quantize(cloud.points, order)
    keys = np.fromiter((hilbert_index(c, order) for c in cells),
                       dtype=np.int64, count=len(cells))
    return np.argsort(keys, kind="stable")


def expand_row_permutation(point_perm: np.ndarray,
                           multiplicity: np.ndarray) -> np.ndarray:
    """Expand a point permutation to rows, moving multiplicity runs intact."""
    multiplicity = np.asarray(multiplicity, dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(multiplicity)))
    return np.concatenate([
        np.arange(offsets[p], offsets[p] + multiplicity[p], dtype=np.int64)
        for p in point_perm
    ])


def apply_row_permutation(a, perm: np.ndarray):
    """Symmetric permutation P^T A P; ``perm[new] = old`` row indices.

    Accepts a dense array or a QuadTreeMatrix and returns the same kind.
    """
    perm = np.asarray(perm, dtype=np.int64)
    sorted_perm = np.sort(perm)
    if not np.array_equal(sorted_perm, np.arange(len(perm))):
        raise ValueError("perm is not a permutation of 0..n-1")
    if isinstance(a, QuadTreeMatrix):
        if len(perm) != a.n_native:
            raise ValueError(f"permutation length {len(perm)} != native size "
                             f"{a.n_native}")
        dense = to_dense(a)[np.ix_(perm, perm)]
        return build_from_dense(dense, a.block_size, a.chunk_size)
    a = np.asarray(a)
    if a.shape[0] != len(perm):
        raise ValueError(f"permutation length {len(perm)} != matrix size {a.shape[0]}")
    return a[np.ix_(perm, perm)]


def locality_metric(a, magnitude_threshold: float) -> LocalityMetric:
    """Mean and 90th-percentile band |i - j| over significant elements.

    Elements with ``|a_ij| >= magnitude_threshold`` count; an empty
    selection is flagged with ``count == 0`` and NaN bands.
    """
    if magnitude_threshold <= 0:
        raise ValueError(f"threshold must be positive, got {magnitude_threshold}")
    dense = to_dense(a) if isinstance(a, QuadTreeMatrix) else np.asarray(a)
    rows, cols = np.nonzero(np.abs(dense) >= magnitude_threshold)
    if len(rows) == 0:
        return LocalityMetric(float("nan"), float("nan"), 0)
    band = np.abs(rows - cols)
    return LocalityMetric(float(band.mean()),
                          float(np.percentile(band, 90)), len(band))
