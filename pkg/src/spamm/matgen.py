"""Synthetic matrices with controlled decay and cluster-like Hamiltonians.

Two families stand in for converged quantum-chemistry inputs: plain
symmetric matrices whose magnitudes decay with index separation |i - j|
(exponential or algebraic envelope), and Hamiltonians over random 3-D
molecule clusters whose couplings decay exponentially with distance.
The cluster diagonal is split into two shifted bands so the spectrum has
a guaranteed gap at a known occupation count, which keeps the projector
well defined for oracle comparisons.  Everything is deterministic per
seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ordering import PointCloud

__all__ = ["DecaySpec", "gen_decay_matrix", "gen_cluster_hamiltonian",
           "EXPONENTIAL", "ALGEBRAIC"]

EXPONENTIAL = "exponential"
ALGEBRAIC = "algebraic"

# Cluster defaults: coupling drops by 1e-3 per mean intermolecular spacing,
# so the 1e-6..1e-10 tolerance window stays in the gradual-decay regime,
# and the two diagonal bands sit far outside the coupling radius.
_COUPLING_DECADE_PER_SPACING = 3.0
_BAND_LOW = -30.0
_BAND_HIGH = 30.0
_BAND_JITTER = 0.5


@dataclass
class DecaySpec:
    """Envelope family for index-separation decay."""

    kind: str = EXPONENTIAL
    c: float = 1.0
    lam: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (EXPONENTIAL, ALGEBRAIC):
            raise ValueError(f"kind must be '{EXPONENTIAL}' or '{ALGEBRAIC}', "
                             f"got {self.kind!r}")
        if self.c <= 0:
            raise ValueError(f"envelope amplitude c must be positive, got {self.c}")
        if self.kind == EXPONENTIAL and not 0 < self.lam < 1:
            raise ValueError(f"exponential decay needs 0 < lambda < 1, got {self.lam}")
        if self.kind == ALGEBRAIC and self.lam <= 0:
            raise ValueError(f"algebraic decay needs lambda > 0, got {self.lam}")

    def envelope(self, separation: np.ndarray) -> np.ndarray:
        if self.kind == EXPONENTIAL:
            return self.c * self.lam ** separation
        return self.c / (separation.astype(np.float64) ** self.lam + 1.0)


def gen_decay_matrix(n: int, spec: DecaySpec) -> np.ndarray:
    """Symmetric dense matrix with every |a_ij| strictly below the envelope."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(spec.seed)
    idx = np.arange(n)
    sep = np.abs(idx[:, None] - idx[None, :])
    u = rng.uniform(0.5, 1.0, size=(n, n))
    u = np.triu(u) + np.triu(u, 1).T
    return spec.envelope(sep) * u


def gen_cluster_hamiltonian(n_molecules: int, rows_per_molecule: int = 25,
                            box_density: float = 1.0, seed: int = 0,
                            occupied_rows_per_molecule: int = 10):
    """Random molecule-cluster Hamiltonian with a built-in spectral gap.

    Molecule centers are sampled uniformly in a cube sized for
    ``box_density`` molecules per unit volume.  Off-diagonal couplings are
    exp(-dist/scale) times a symmetric uniform factor in [0.5, 1); the
    decay scale puts nearest-neighbor couplings near 1e-1 and flattens to
    1e-6 around five spacings out.  Diagonals take a low or high band
    shift (first ``occupied_rows_per_molecule`` rows of each molecule are
    low), so exactly ``n_occ`` eigenvalues sit below the gap.

    Returns ``(f, cloud, n_occ)``.
    """
    if n_molecules < 1:
        raise ValueError(f"n_molecules must be >= 1, got {n_molecules}")
    if not 0 < occupied_rows_per_molecule <= rows_per_molecule:
        raise ValueError("occupied rows per molecule must be in "
                         f"(0, {rows_per_molecule}], got {occupied_rows_per_molecule}")
    if box_density <= 0:
        raise ValueError(f"box_density must be positive, got {box_density}")

    rng = np.random.default_rng(seed)
    n = n_molecules * rows_per_molecule
    box_edge = (n_molecules / box_density) ** (1.0 / 3.0)
    centers = rng.uniform(0.0, box_edge, size=(n_molecules, 3))

    spacing = box_density ** (-1.0 / 3.0)
    scale = spacing / (_COUPLING_DECADE_PER_SPACING * np.log(10.0))

    mol_dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
    row_mol = np.repeat(np.arange(n_molecules), rows_per_molecule)
    dist = mol_dist[np.ix_(row_mol, row_mol)]

    g = rng.uniform(0.5, 1.0, size=(n, n))
    g = np.triu(g) + np.triu(g, 1).T
    f = np.exp(-dist / scale) * g

    row_in_mol = np.tile(np.arange(rows_per_molecule), n_molecules)
    low = row_in_mol < occupied_rows_per_molecule
    shifts = np.where(low, _BAND_LOW, _BAND_HIGH)
    shifts = shifts + _BAND_JITTER * rng.uniform(-1.0, 1.0, size=n)
    np.fill_diagonal(f, shifts)

    cloud = PointCloud(points=centers,
                       multiplicity=np.full(n_molecules, rows_per_molecule))
    n_occ = n_molecules * occupied_rows_per_molecule
    return f, cloud, n_occ
