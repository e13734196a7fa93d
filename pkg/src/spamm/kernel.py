"""Sparse approximate matrix multiply over quadtree matrices.

The product C = A*B is assembled from the three-dimensional convolution
space of index triples (i, k, j).  A subproduct is pursued only while
``norm(A_ik) * norm(B_kj) > tau`` (strict, so exact-zero quadrants are
always skipped); the sub-multiplicative norm inequality guarantees every
culled subtree contributes at most tau per node.

The occlusion test is evaluated tier by tier over index arrays, which is
count-equivalent to the depth-first recursion because the predicate at a
node depends only on that node's norms.  Retained leaf products run
through a compiled triple-loop kernel in ascending (C-block, k) order, so
results are bit-reproducible across runs, worker counts, and modes.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .quadtree import QuadTreeMatrix

__all__ = ["ProductStats", "multiply", "convolution_census", "leaf_gemm",
           "WORKERS_ENV_VAR"]

WORKERS_ENV_VAR = "SPAMM_WORKERS"

_CHILD_OFFSETS = np.array(
    [(di, dk, dj) for di in (0, 1) for dk in (0, 1) for dj in (0, 1)],
    dtype=np.int64)


@dataclass
class ProductStats:
    """Per-tier occlusion counters for one multiply (or a dry census)."""

    tau: float
    visited: tuple          # per tier, triples whose norm product passed
    culled: tuple           # per tier, candidate triples occluded
    leaf_products: int
    flop_estimate: int      # leaf_products * 2 * block_size^3
    wall_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "tau": self.tau,
            "tiers": [{"t": t, "visited": int(v), "culled": int(c)}
                      for t, (v, c) in enumerate(zip(self.visited, self.culled))],
            "leaf_products": int(self.leaf_products),
            "flop_estimate": int(self.flop_estimate),
            "wall_seconds": self.wall_seconds,
        }

    def counts_equal(self, other: "ProductStats") -> bool:
        return (self.visited == other.visited and self.culled == other.culled
                and self.leaf_products == other.leaf_products)


@njit(cache=True, nogil=True)
def _gemm_acc(a, b, c):  # pragma: no cover - exercised via wrappers
    n = a.shape[0]
    for i in range(n):
        for k in range(n):
            aik = a[i, k]
            for j in range(n):
                c[i, j] += aik * b[k, j]


@njit(cache=True, nogil=True)
def _gemm_batch(a_pos, b_pos, c_pos, a_data, b_data, c_data):  # pragma: no cover
    for t in range(a_pos.shape[0]):
        _gemm_acc(a_data[a_pos[t]], b_data[b_pos[t]], c_data[c_pos[t]])


def leaf_gemm(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Accumulate ``c += a @ b`` with a plain i-k-j triple loop.

    The loop order is fixed: i outer, k middle, j inner, so each c[i, j]
    receives its k terms in ascending order.  ``c`` is updated in place
    and returned.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (a.shape == b.shape == c.shape) or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"leaf blocks must share one square shape, got "
                         f"{a.shape}, {b.shape}, {c.shape}")
    _gemm_acc(np.ascontiguousarray(a), np.ascontiguousarray(b), c)
    return c


def _sweep(tier_norms_a: list, tier_norms_b: list, tau: float):
    """Tiered occlusion over the convolution space.

    Returns per-tier visited/culled counts and the retained leaf triples
    as (i, k, j) index arrays.
    """
    depth = len(tier_norms_a) - 1
    i = np.zeros(1, dtype=np.int64)
    k = np.zeros(1, dtype=np.int64)
    j = np.zeros(1, dtype=np.int64)
    visited, culled = [], []
    for t in range(depth + 1):
        keep = tier_norms_a[t][i, k] * tier_norms_b[t][k, j] > tau
        n_keep = int(np.count_nonzero(keep))
        visited.append(n_keep)
        culled.append(len(keep) - n_keep)
        i, k, j = i[keep], k[keep], j[keep]
        if t < depth:
            if n_keep == 0:
                visited.extend([0] * (depth - t))
                culled.extend([0] * (depth - t))
                break
            i = (2 * i)[:, None] + _CHILD_OFFSETS[:, 0]
            k = (2 * k)[:, None] + _CHILD_OFFSETS[:, 1]
            j = (2 * j)[:, None] + _CHILD_OFFSETS[:, 2]
            i, k, j = i.ravel(), k.ravel(), j.ravel()
    return visited, culled, i, k, j


def _resolve_workers(mode: str, workers: int | None) -> int:
    if mode == "serial":
        return 1
    if workers is not None:
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        return int(workers)
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _task_slices(sorted_keys: np.ndarray, group_divisor: int, n_tasks: int) -> list:
    """Cut the sorted triple range into contiguous slices on chunk borders."""
    group = sorted_keys // group_divisor
    starts = np.concatenate(([0], np.flatnonzero(np.diff(group)) + 1))
    targets = (np.arange(1, n_tasks) * len(sorted_keys)) // n_tasks
    cut_idx = np.unique(np.searchsorted(starts, targets, side="left"))
    cut_idx = cut_idx[cut_idx < len(starts)]
    bounds = np.concatenate(([0], starts[cut_idx], [len(sorted_keys)]))
    bounds = np.unique(bounds)
    return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _check_conformable(a: QuadTreeMatrix, b: QuadTreeMatrix) -> None:
    if (a.n_native, a.n_padded, a.block_size) != (b.n_native, b.n_padded, b.block_size):
        raise ValueError(
            f"shape/blocking mismatch: ({a.n_native}, {a.n_padded}, {a.block_size}) "
            f"vs ({b.n_native}, {b.n_padded}, {b.block_size})")


def multiply(a: QuadTreeMatrix, b: QuadTreeMatrix, tau: float,
             mode: str = "serial", deterministic: bool = True,
             workers: int | None = None):
    """Multiply two quadtree matrices under occlusion tolerance ``tau``.

    Returns ``(c, stats)``.  ``mode`` selects single-threaded execution or
    a fork-join pool over chunk-aligned slices of the retained products;
    both orders accumulate each C block over ascending k, so results are
    bit-identical for any worker count.  ``deterministic=False`` lifts
    that ordering guarantee from the contract; this implementation keeps
    the same schedule either way.
    """
    _check_conformable(a, b)
    if not np.isfinite(tau) or tau < 0:
        raise ValueError(f"tau must be finite and >= 0, got {tau}")
    if mode not in ("serial", "tasked"):
        raise ValueError(f"mode must be 'serial' or 'tasked', got {mode!r}")
    n_workers = _resolve_workers(mode, workers)
    t0 = time.perf_counter()

    visited, culled, ti, tk, tj = _sweep(a._tier_norms, b._tier_norms, tau)
    nb = a.n_blocks
    n_leaf = len(ti)
    if n_leaf == 0:
        c = QuadTreeMatrix._from_blocks(
            a.n_native, a.block_size, a.chunk_size,
            np.zeros(0, dtype=np.int64),
            np.zeros((0, a.block_size, a.block_size)), a.depth)
        stats = _make_stats(tau, visited, culled, 0, a.block_size,
                            time.perf_counter() - t0)
        return c, stats

    # Sort by (chunk row, chunk col, block row, block col, k): contiguous
    # per C block with k ascending, and C-chunk groups stay contiguous so
    # parallel slices never split a block's accumulation run.
    cs = max(1, a.chunk_size // a.block_size)
    gc = nb // cs
    key = ((((ti // cs) * gc + tj // cs) * cs + ti % cs) * cs + tj % cs) * nb + tk
    order = np.argsort(key, kind="stable")
    ti, tk, tj, key = ti[order], tk[order], tj[order], key[order]

    c_keys, c_pos = np.unique(ti * nb + tj, return_inverse=True)
    a_pos = np.searchsorted(a._block_keys, ti * nb + tk)
    b_pos = np.searchsorted(b._block_keys, tk * nb + tj)
    c_data = np.zeros((len(c_keys), a.block_size, a.block_size))
    a_pos = np.ascontiguousarray(a_pos)
    b_pos = np.ascontiguousarray(b_pos)
    c_pos = np.ascontiguousarray(c_pos)

    if n_workers == 1:
        _gemm_batch(a_pos, b_pos, c_pos, a._block_data, b._block_data, c_data)
    else:
        slices = _task_slices(key, cs * cs * nb, n_workers)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [
                pool.submit(_gemm_batch, a_pos[lo:hi], b_pos[lo:hi], c_pos[lo:hi],
                            a._block_data, b._block_data, c_data)
                for lo, hi in slices
            ]
            for f in futures:
                f.result()

    c = QuadTreeMatrix._from_blocks(a.n_native, a.block_size, a.chunk_size,
                                    c_keys, c_data, a.depth)
    stats = _make_stats(tau, visited, culled, n_leaf, a.block_size,
                        time.perf_counter() - t0)
    return c, stats


def convolution_census(a: QuadTreeMatrix, b: QuadTreeMatrix,
                       tau: float) -> ProductStats:
    """Count visited/culled convolution nodes without any numerical work.

    The counters are exactly those :func:`multiply` would report for the
    same operands and tolerance.
    """
    _check_conformable(a, b)
    if not np.isfinite(tau) or tau < 0:
        raise ValueError(f"tau must be finite and >= 0, got {tau}")
    t0 = time.perf_counter()
    visited, culled, ti, _, _ = _sweep(a._tier_norms, b._tier_norms, tau)
    return _make_stats(tau, visited, culled, len(ti), a.block_size,
                       time.perf_counter() - t0)


def _make_stats(tau, visited, culled, leaf_products, block_size, wall) -> ProductStats:
    return ProductStats(
        tau=float(tau),
        visited=tuple(int(v) for v in visited),
        culled=tuple(int(c) for c in culled),
        leaf_products=int(leaf_products),
        flop_estimate=int(leaf_products) * 2 * block_size ** 3,
        wall_seconds=float(wall),
    )
