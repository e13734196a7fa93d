"""Independent reference implementations used to check the library.

Everything here is deliberately written against plain dense arrays with
no imports from the package's compute paths, so a library bug cannot
cancel out of a comparison.
"""

import numpy as np


def triple_loop_product(a, b):
    """Pure-Python i-k-j dense product (small n only)."""
    n = a.shape[0]
    c = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for k in range(n):
            aik = a[i, k]
            for j in range(n):
                c[i][j] += aik * b[k, j]
    return np.array(c)


def triple_loop_gemm_ijk(a, b, c):
    """Pure-Python i-j-k accumulate, the alternate loop order."""
    n = a.shape[0]
    for i in range(n):
        for j in range(n):
            acc = c[i, j]
            for k in range(n):
                acc += a[i, k] * b[k, j]
            c[i, j] = acc
    return c


def dense_product(a, b):
    """Independent dense product via einsum (no BLAS dot path)."""
    return np.einsum("ik,kj->ij", a, b)


def eig_projector(f, n_occ):
    """Spectral projector onto the n_occ lowest eigenvectors."""
    _, v = np.linalg.eigh(f)
    occ = v[:, :n_occ]
    return occ @ occ.T


def dense_sp2(f, n_occ, max_iter=100, idem_tol=1e-9):
    """Dense-arithmetic SP2 with the same branch rule as the solver.

    Returns (p, branches, iterations, converged).
    """
    w_min = np.min(np.diag(f) - (np.abs(f).sum(axis=1) - np.abs(np.diag(f))))
    w_max = np.max(np.diag(f) + (np.abs(f).sum(axis=1) - np.abs(np.diag(f))))
    x = (w_max * np.eye(f.shape[0]) - f) / (w_max - w_min)
    branches = []
    for it in range(max_iter):
        x_sq = x @ x
        t_x = np.trace(x)
        t_sq = np.trace(x_sq)
        if abs(t_sq - t_x) < idem_tol and abs(t_x - n_occ) < 1e-6 * n_occ:
            return x, branches, it, True
        if abs(t_sq - n_occ) <= abs(2 * t_x - t_sq - n_occ):
            x = x_sq
            branches.append("SQUARE")
        else:
            x = 2 * x - x_sq
            branches.append("EXPAND")
    return x, branches, max_iter, False


def norm_pyramid(dense, block_size):
    """Hierarchical Frobenius norms recomputed from scratch on a dense array.

    Pads like the library does and returns one (2^t, 2^t) array per tier.
    """
    n = dense.shape[0]
    n_padded = block_size
    while n_padded < n:
        n_padded *= 2
    padded = np.zeros((n_padded, n_padded))
    padded[:n, :n] = dense
    nb = n_padded // block_size
    norms2 = (padded.reshape(nb, block_size, nb, block_size) ** 2).sum(axis=(1, 3))
    tiers = [np.sqrt(norms2)]
    while norms2.shape[0] > 1:
        half = norms2.shape[0] // 2
        norms2 = norms2.reshape(half, 2, half, 2).sum(axis=(1, 3))
        tiers.insert(0, np.sqrt(norms2))
    return tiers


def census_by_recursion(norms_a, norms_b, tau):
    """Depth-first occlusion census over norm pyramids (the Alg.-1 shape).

    Returns (visited, culled, leaf_triples) and serves as an independent
    check that breadth-first counting matches the recursive definition.
    """
    depth = len(norms_a) - 1
    visited = [0] * (depth + 1)
    culled = [0] * (depth + 1)
    leaves = []

    def recurse(t, i, k, j):
        if norms_a[t][i, k] * norms_b[t][k, j] > tau:
            visited[t] += 1
            if t == depth:
                leaves.append((i, k, j))
                return
            for di in (0, 1):
                for dk in (0, 1):
                    for dj in (0, 1):
                        recurse(t + 1, 2 * i + di, 2 * k + dk, 2 * j + dj)
        else:
            culled[t] += 1

    recurse(0, 0, 0, 0)
    return visited, culled, leaves


def best_two_way_split(costs):
    """Exact optimal makespan for scheduling integer costs on two PEs."""
    total = int(sum(costs))
    reachable = {0}
    for c in costs:
        reachable |= {r + int(c) for r in reachable}
    return min(max(s, total - s) for s in reachable)


def lpt_schedule(costs, P):
    """Longest-processing-time-first busy vector (ties to lowest PE)."""
    busy = [0.0] * P
    order = sorted(range(len(costs)), key=lambda i: (-costs[i], i))
    for i in order:
        pe = min(range(P), key=lambda p: (busy[p], p))
        busy[pe] += costs[i]
    return busy
