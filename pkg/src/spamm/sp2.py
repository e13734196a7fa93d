"""Second-order spectral projection (SP2) on quadtree matrices.

Maps a symmetric Hamiltonian into [0, 1] with Gershgorin bounds, then
iterates X -> X^2 or X -> 2X - X^2, choosing at each step the branch whose
trace lands closer to the target occupation.  The fixed point is the
idempotent projector onto the occupied subspace.  Every iteration costs
one approximate multiply; no re-thresholding happens between iterations,
so the multiply tolerance alone controls fill-in and accumulated error.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .kernel import multiply
from .quadtree import QuadTreeMatrix, add_scaled, identity, to_dense, trace

__all__ = ["SpectralBounds", "SP2State", "gershgorin_bounds", "sp2_init",
           "sp2_step", "sp2_solve", "energy_error", "idempotency_error",
           "SQUARE", "EXPAND"]

SQUARE = "SQUARE"
EXPAND = "EXPAND"


@dataclass
class SpectralBounds:
    eps_min: float
    eps_max: float

    def __post_init__(self):
        if not self.eps_min <= self.eps_max:
            raise ValueError(f"eps_min {self.eps_min} > eps_max {self.eps_max}")


@dataclass
class SP2State:
    """Iteration record of one SP2 solve."""

    X: QuadTreeMatrix
    n_occ: int
    trace_history: list = field(default_factory=list)
    branch_history: list = field(default_factory=list)
    iteration: int = 0
    converged: bool = False
    tau: float = 0.0
    wall_seconds_per_iteration: list = field(default_factory=list)

    def to_report_dict(self, idem_error: float | None = None) -> dict:
        report = {
            "n": self.X.n_native,
            "n_occ": self.n_occ,
            "tau": self.tau,
            "iterations": self.iteration,
            "converged": self.converged,
            "trace_history": [float(t) for t in self.trace_history],
            "branch_history": list(self.branch_history),
            "wall_seconds_per_iteration": list(self.wall_seconds_per_iteration),
        }
        if idem_error is not None:
            report["idempotency_error"] = float(idem_error)
        return report


def gershgorin_bounds(f: QuadTreeMatrix, sym_tol: float = 1e-10) -> SpectralBounds:
    """Disc bounds containing the full spectrum of a symmetric matrix."""
    dense = to_dense(f)
    asym = float(np.abs(dense - dense.T).max())
    if asym > sym_tol:
        raise ValueError(f"matrix is not symmetric: max |F - F^T| = {asym:.3e}")
    diag = np.diag(dense)
    radius = np.abs(dense).sum(axis=1) - np.abs(diag)
    return SpectralBounds(float((diag - radius).min()), float((diag + radius).max()))


def sp2_init(f: QuadTreeMatrix, bounds: SpectralBounds) -> QuadTreeMatrix:
    """Map F linearly so its spectrum lands in [0, 1], reversed.

    X0 = (eps_max*I - F) / (eps_max - eps_min): eigenvalues near eps_min
    (occupied states) map near 1, eigenvalues near eps_max map near 0.
    """
    spread = bounds.eps_max - bounds.eps_min
    if spread <= 0:
        raise ValueError("degenerate spectral bounds: eps_max equals eps_min")
    eye = identity(f.n_native, f.block_size, f.chunk_size)
    return add_scaled(bounds.eps_max / spread, eye, -1.0 / spread, f)


def _step(x: QuadTreeMatrix, n_occ: int, tau: float, mode: str,
          workers: int | None):
    x_sq, stats = multiply(x, x, tau, mode=mode, workers=workers)
    t_x = trace(x)
    t_sq = trace(x_sq)
    t_ex = 2.0 * t_x - t_sq
    if abs(t_sq - n_occ) <= abs(t_ex - n_occ):
        return x_sq, SQUARE, t_x, t_sq, stats
    x_next = add_scaled(2.0, x, -1.0, x_sq)
    return x_next, EXPAND, t_x, t_sq, stats


def sp2_step(x: QuadTreeMatrix, n_occ: int, tau: float, mode: str = "serial",
             workers: int | None = None):
    """One SP2 update; returns ``(x_next, branch)``.

    Computes X^2 once, then picks X^2 (SQUARE) or 2X - X^2 (EXPAND) by
    which candidate trace is closer to ``n_occ``; ties go to SQUARE.
    """
    x_next, branch, _, _, _ = _step(x, n_occ, tau, mode, workers)
    return x_next, branch


def sp2_solve(f: QuadTreeMatrix, n_occ: int, tau: float, max_iter: int = 100,
              idem_tol: float = 1e-9, mode: str = "serial",
              workers: int | None = None):
    """Run SP2 to convergence; returns ``(p, state)``.

    Converged when ``|trace(X^2) - trace(X)| < idem_tol`` and
    ``|trace(X) - n_occ| < 1e-6 * n_occ``.  Hitting ``max_iter`` first is
    reported through ``state.converged``, not raised.
    """
    if not 0 < n_occ < f.n_native:
        raise ValueError(f"n_occ must lie strictly between 0 and {f.n_native}, "
                         f"got {n_occ}")
    x = sp2_init(f, gershgorin_bounds(f))
    state = SP2State(X=x, n_occ=int(n_occ), tau=float(tau))
    state.trace_history.append(trace(x))
    for _ in range(max_iter):
        t0 = time.perf_counter()
        x_next, branch, t_x, t_sq, _ = _step(x, n_occ, tau, mode, workers)
        if abs(t_sq - t_x) < idem_tol and abs(t_x - n_occ) < 1e-6 * n_occ:
            state.converged = True
            state.wall_seconds_per_iteration.append(time.perf_counter() - t0)
            break
        x = x_next
        state.iteration += 1
        state.trace_history.append(trace(x))
        state.branch_history.append(branch)
        state.wall_seconds_per_iteration.append(time.perf_counter() - t0)
    state.X = x
    return x, state


def energy_error(f: QuadTreeMatrix, p_ref: QuadTreeMatrix,
                 p_approx: QuadTreeMatrix, mode: str = "serial",
                 workers: int | None = None) -> float:
    """Tr[F (P_ref - P_approx)], evaluated with an exact (tau = 0) multiply."""
    delta = add_scaled(1.0, p_ref, -1.0, p_approx)
    fd, _ = multiply(f, delta, 0.0, mode=mode, workers=workers)
    return trace(fd)


def idempotency_error(p: QuadTreeMatrix, mode: str = "serial",
                      workers: int | None = None) -> float:
    """Frobenius norm of P^2 - P, evaluated with an exact multiply."""
    p_sq, _ = multiply(p, p, 0.0, mode=mode, workers=workers)
    return add_scaled(1.0, p_sq, -1.0, p).norm()
