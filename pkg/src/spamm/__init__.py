"""Sparse approximate matrix multiply toolkit.

Quadtree matrices with hierarchical Frobenius norms, the occluded
multiply kernel, SP2 spectral projection, Hilbert-curve ordering,
synthetic decay/cluster generators, and a deterministic simulator of
tiered task decomposition with persistence-based load balancing.
"""

from .quadtree import (QuadTreeMatrix, Node, OccupancyStats, DEFAULT_BIN_EDGES,
                       build_from_dense, to_dense, verify_norms, add_scaled,
                       trace, identity, occupancy_stats)
from .kernel import ProductStats, multiply, convolution_census, leaf_gemm
from .sp2 import (SpectralBounds, SP2State, gershgorin_bounds, sp2_init,
                  sp2_step, sp2_solve, energy_error, idempotency_error,
                  SQUARE, EXPAND)
from .ordering import (PointCloud, LocalityMetric, hilbert_index, hilbert_decode,
                       reorder_permutation, expand_row_permutation,
                       apply_row_permutation, locality_metric)
from .matgen import DecaySpec, gen_decay_matrix, gen_cluster_hamiltonian
from .chare_sim import (CostModel, ChareGraph, Assignment, SimReport, AmdahlFit,
                        build_chare_graph, assign_static, greedy_comm_balance,
                        simulate_iteration, parallel_efficiency, amdahl_fit,
                        calibrate_cost_model)

__version__ = "0.1.0"

__all__ = [
    "QuadTreeMatrix", "Node", "OccupancyStats", "DEFAULT_BIN_EDGES",
    "build_from_dense", "to_dense", "verify_norms", "add_scaled", "trace",
    "identity", "occupancy_stats",
    "ProductStats", "multiply", "convolution_census", "leaf_gemm",
    "SpectralBounds", "SP2State", "gershgorin_bounds", "sp2_init", "sp2_step",
    "sp2_solve", "energy_error", "idempotency_error", "SQUARE", "EXPAND",
    "PointCloud", "LocalityMetric", "hilbert_index", "hilbert_decode",
    "reorder_permutation", "expand_row_permutation", "apply_row_permutation",
    "locality_metric",
    "DecaySpec", "gen_decay_matrix", "gen_cluster_hamiltonian",
    "CostModel", "ChareGraph", "Assignment", "SimReport", "AmdahlFit",
    "build_chare_graph", "assign_static", "greedy_comm_balance",
    "simulate_iteration", "parallel_efficiency", "amdahl_fit",
    "calibrate_cost_model",
    "__version__",
]
