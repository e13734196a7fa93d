import numpy as np
import pytest

import spamm
from spamm.quadtree import QuadTreeMatrix

from oracles import dense_product


def test_padding_2250_to_4096():
    tree = spamm.build_from_dense(np.zeros((2250, 2250)), block_size=16)
    assert tree.n_padded == 4096
    assert tree.n_native == 2250


def test_single_element_root_is_leaf():
    tree = spamm.build_from_dense(np.array([[5.0]]), block_size=1)
    assert tree.root.is_leaf
    assert tree.root.norm == 5.0
    assert tree.depth == 0


def test_three_four_five_norm_and_null_children():
    tree = spamm.build_from_dense(np.array([[3.0, 4.0], [0.0, 0.0]]), block_size=1)
    assert tree.root.norm == pytest.approx(5.0, rel=1e-15)
    assert tree.root.children[1][0] is None
    assert tree.root.children[1][1] is None
    assert tree.root.children[0][0].norm == 3.0
    assert tree.root.children[0][1].norm == 4.0


@pytest.mark.parametrize("n,nb", [(7, 2), (7, 4), (1, 1), (37, 4), (64, 16), (100, 8)])
def test_roundtrip_bitwise(rng, n, nb):
    dense = rng.standard_normal((n, n))
    tree = spamm.build_from_dense(dense, block_size=nb)
    assert np.array_equal(spamm.to_dense(tree), dense)


def test_empty_tree_expands_to_zeros():
    tree = spamm.build_from_dense(np.zeros((4, 4)), block_size=2)
    assert np.array_equal(spamm.to_dense(tree), np.zeros((4, 4)))
    assert tree.root.norm == 0.0
    assert tree.stored_leaf_count == 0


def test_identity_examples():
    assert np.array_equal(spamm.to_dense(spamm.identity(3, 2)), np.eye(3))
    assert np.array_equal(spamm.to_dense(spamm.identity(1, 1)), np.eye(1))
    assert spamm.trace(spamm.identity(5, 2)) == 5.0
    assert spamm.identity(4, 2).norm() == pytest.approx(2.0, rel=1e-15)


def test_identity_offdiagonal_quadrants_null():
    tree = spamm.identity(8, 2)
    assert tree.root.children[0][1] is None
    assert tree.root.children[1][0] is None


def test_add_scaled_cancellation_prunes_to_null():
    dense = np.arange(16.0).reshape(4, 4)
    a = spamm.build_from_dense(dense, block_size=2)
    z = spamm.add_scaled(1.0, a, -1.0, a)
    assert z.norm() == 0.0
    assert z.stored_leaf_count == 0
    assert np.array_equal(spamm.to_dense(z), np.zeros((4, 4)))


def test_add_scaled_identity_example():
    eye = spamm.identity(4, 2)
    out = spamm.add_scaled(2.0, eye, -1.0, eye)
    assert np.array_equal(spamm.to_dense(out), np.eye(4))


def test_add_scaled_matches_dense(rng):
    da = rng.standard_normal((8, 8))
    db = rng.standard_normal((8, 8))
    a = spamm.build_from_dense(da, block_size=2)
    b = spamm.build_from_dense(db, block_size=2)
    out = spamm.add_scaled(0.3, a, -1.7, b)
    assert np.array_equal(spamm.to_dense(out), 0.3 * da + (-1.7) * db)


def test_add_scaled_shape_mismatch():
    a = spamm.build_from_dense(np.eye(4), block_size=2)
    b = spamm.build_from_dense(np.eye(8), block_size=2)
    with pytest.raises(ValueError):
        spamm.add_scaled(1.0, a, 1.0, b)


def test_trace_examples(rng):
    assert spamm.trace(spamm.identity(8, 2)) == 8.0
    diag = spamm.build_from_dense(np.diag([1.0, 2.0, 3.0]), block_size=2)
    assert spamm.trace(diag) == pytest.approx(6.0, rel=1e-15)
    dense = rng.standard_normal((16, 16))
    tree = spamm.build_from_dense(dense, block_size=4)
    assert spamm.trace(tree) == pytest.approx(np.trace(dense), rel=1e-13)


def test_verify_norms_fresh_and_corrupted(rng):
    dense = rng.standard_normal((16, 16))
    tree = spamm.build_from_dense(dense, block_size=4)
    ok, worst = spamm.verify_norms(tree)
    assert ok and worst < 1e-12
    tree.root.children[0][0].norm += 1.0
    ok, worst = spamm.verify_norms(tree)
    assert not ok and worst > 1e-12


def test_verify_norms_after_multiply(rng):
    a = spamm.build_from_dense(rng.standard_normal((32, 32)), block_size=4)
    b = spamm.build_from_dense(rng.standard_normal((32, 32)), block_size=4)
    for tau in (0.0, 1e-2, 1.0):
        c, _ = spamm.multiply(a, b, tau)
        ok, worst = spamm.verify_norms(c)
        assert ok, f"tau={tau}: worst deviation {worst}"


def test_occupancy_default_bins_and_zero_matrix():
    tree = spamm.build_from_dense(np.zeros((8, 8)), block_size=2)
    stats = spamm.occupancy_stats(tree)
    assert stats.bin_edges == (0.0, 1e-8, 1e-6, 1e-2, 1.0)
    assert stats.counts == (64, 0, 0, 0)
    assert stats.leaf_count == 0
    assert stats.null_leaf_count == 16


def test_occupancy_matches_dense_histogram(rng):
    dense = rng.uniform(0, 1, (50, 50)) ** 8  # spread across magnitude decades
    dense = np.triu(dense) + np.triu(dense, 1).T
    tree = spamm.build_from_dense(dense, block_size=8)
    stats = spamm.occupancy_stats(tree)
    expected, _ = np.histogram(np.abs(dense), bins=np.array(stats.bin_edges))
    assert stats.counts == tuple(expected)
    assert sum(stats.counts) == dense.size
    records = stats.to_records()
    assert records[0]["bin_lo"] == 0.0 and records[-1]["bin_hi"] == 1.0


def test_occupancy_rejects_unsorted_edges():
    tree = spamm.identity(4, 2)
    with pytest.raises(ValueError):
        spamm.occupancy_stats(tree, bin_edges=[0.0, 1e-2, 1e-6])


def test_padding_neutrality(rng):
    dense = rng.standard_normal((20, 20))
    small = spamm.build_from_dense(dense, block_size=2)   # padded to 32
    large = spamm.build_from_dense(dense, block_size=16)  # padded to 32 differently
    assert np.array_equal(spamm.to_dense(small), spamm.to_dense(large))
    assert spamm.trace(small) == pytest.approx(spamm.trace(large), rel=1e-13)
    summed_small = spamm.add_scaled(2.0, small, 3.0, small)
    summed_large = spamm.add_scaled(2.0, large, 3.0, large)
    assert np.array_equal(spamm.to_dense(summed_small), spamm.to_dense(summed_large))


def test_submultiplicativity_witness(rng):
    for _ in range(5):
        da = rng.standard_normal((24, 24))
        db = rng.standard_normal((24, 24))
        a = spamm.build_from_dense(da, block_size=4)
        b = spamm.build_from_dense(db, block_size=4)
        product_norm = np.linalg.norm(dense_product(da, db))
        assert product_norm <= a.norm() * b.norm() * (1 + 1e-12)


def test_build_validation_errors():
    with pytest.raises(ValueError):
        spamm.build_from_dense(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        spamm.build_from_dense(np.zeros((4, 4)), block_size=3)
    with pytest.raises(ValueError):
        spamm.build_from_dense(np.zeros((16, 16)), block_size=4, chunk_size=2)
    with pytest.raises(ValueError):
        spamm.build_from_dense(np.zeros((16, 16)), block_size=4, chunk_size=6)


def test_chunk_tier_geometry():
    tree = spamm.build_from_dense(np.eye(64), block_size=4, chunk_size=16)
    assert tree.depth == 4
    assert tree.chunk_tier() == 2
    assert tree.chunk_tier(64) == 0
    with pytest.raises(ValueError):
        tree.chunk_tier(128)


def test_node_tier_annotation(rng):
    tree = spamm.build_from_dense(rng.standard_normal((8, 8)), block_size=2)
    assert tree.root.tier == 0
    child = tree.root.children[0][0]
    assert child.tier == 1
    assert child.children[0][0].tier == 2
    assert child.children[0][0].is_leaf
