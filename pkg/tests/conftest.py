import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import spamm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tree(rng, n, block_size, chunk_size=None):
    dense = rng.standard_normal((n, n))
    return dense, spamm.build_from_dense(dense, block_size, chunk_size)


def hilbert_ordered(f, cloud, random_seed=None, order=10):
    """Apply Hilbert (or seeded random) molecule ordering to a dense matrix."""
    if random_seed is None:
        perm = spamm.reorder_permutation(cloud, order=order)
    else:
        perm = np.random.default_rng(random_seed).permutation(cloud.n_points)
    rows = spamm.expand_row_permutation(perm, cloud.multiplicity)
    return spamm.apply_row_permutation(f, rows)
