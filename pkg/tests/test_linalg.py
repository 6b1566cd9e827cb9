import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from blocksolve.linalg import (BlockDimensionError, BlockLinearMap, BlockPartition, BlockVector,
                               power_iteration)


def test_partition_dims_and_offsets():
    part = BlockPartition((2, 1, 3))
    assert part.total_dim == 6
    assert list(part.offsets) == [0, 2, 3, 6]
    assert part.slice(2) == slice(3, 6)
    assert list(part.index_array([2, 0])) == [3, 4, 5, 0, 1]


@pytest.mark.parametrize("dims", [(2, 0), (1, -1), (0,)])
def test_partition_rejects_bad_dims(dims):
    with pytest.raises(ValueError):
        BlockPartition(dims)


def test_block_vector_length_checked():
    with pytest.raises(BlockDimensionError):
        BlockVector(BlockPartition((2, 1)), np.zeros(4))


def test_block_view_writes_through():
    v = BlockVector.zeros(BlockPartition((2, 1)))
    v.block(1)[:] = 5.0
    assert v.data.tolist() == [0.0, 0.0, 5.0]


def test_apply_identity_blocks_concatenates():
    part = BlockPartition((2, 1))
    I3 = np.eye(3)
    A = BlockLinearMap.from_dense(I3, part)
    v = BlockVector.from_blocks([[1.0, 2.0], [3.0]])
    np.testing.assert_array_equal(A.apply(v), [1.0, 2.0, 3.0])


def test_apply_zero_vector():
    A = BlockLinearMap([np.arange(6.0).reshape(3, 2), np.ones((3, 1))])
    np.testing.assert_array_equal(A.apply(BlockVector.zeros(A.partition)), np.zeros(3))


def test_apply_small_example():
    # dense oracle: [1 2 3] @ (1, 1, 2) = 1 + 2 + 6 = 9
    A = BlockLinearMap([np.array([[1.0, 2.0]]), np.array([[3.0]])])
    v = BlockVector.from_blocks([[1.0, 1.0], [2.0]])
    np.testing.assert_array_equal(A.apply(v), [9.0])


def test_apply_mismatch_names_block():
    A = BlockLinearMap([np.ones((2, 2)), np.ones((2, 1))])
    v = BlockVector.from_blocks([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(BlockDimensionError) as err:
        A.apply(v)
    assert err.value.block == 1
    assert "block 1" in str(err.value)


def test_blocks_with_wrong_row_count_rejected():
    with pytest.raises(BlockDimensionError, match="block 1"):
        BlockLinearMap([np.ones((2, 2)), np.ones((3, 1))])


def test_adjoint_block_examples():
    A = BlockLinearMap([np.array([[1.0], [2.0]]), np.eye(2)])
    np.testing.assert_array_equal(A.apply_adjoint_block(0, np.array([1.0, 1.0])), [3.0])
    np.testing.assert_array_equal(A.apply_adjoint_block(1, np.array([4.0, -1.0])), [4.0, -1.0])
    np.testing.assert_array_equal(A.apply_adjoint_block(0, np.zeros(2)), [0.0])


def test_adjoint_block_errors():
    A = BlockLinearMap([np.ones((2, 1))])
    with pytest.raises(IndexError):
        A.apply_adjoint_block(3, np.zeros(2))
    with pytest.raises(BlockDimensionError):
        A.apply_adjoint_block(0, np.zeros(3))


@pytest.mark.parametrize("block, expected", [
    (np.eye(3), 1.0),
    (np.zeros((2, 2)), 0.0),
    (np.diag([3.0, 1.0]), 9.0),
])
def test_spectral_norm_sq_examples(block, expected):
    A = BlockLinearMap([block])
    assert A.spectral_norm_sq(0) == pytest.approx(expected, rel=1e-8, abs=0.0)


def test_spectral_norm_sq_matches_eigendecomposition():
    rng = np.random.default_rng(3)
    for _ in range(20):
        M = rng.standard_normal((5, 4))
        exact = np.linalg.eigvalsh(M.T @ M).max()
        est = BlockLinearMap([M]).spectral_norm_sq(0)
        assert est == pytest.approx(exact, rel=1e-7)


def test_power_iteration_orthogonal_start():
    # the all-ones start is in the null space of this operator
    M = np.array([[1.0, -1.0], [1.0, -1.0]])
    est = power_iteration(lambda z: M.T @ (M @ z), 2)
    assert est == pytest.approx(4.0, rel=1e-8)


def test_full_spectral_norm():
    rng = np.random.default_rng(0)
    D = rng.standard_normal((4, 6))
    A = BlockLinearMap.from_dense(D, BlockPartition((2, 4)))
    assert A.full_spectral_norm_sq() == pytest.approx(np.linalg.norm(D, 2) ** 2, rel=1e-7)


_shapes = st.tuples(st.integers(1, 4), st.lists(st.integers(1, 3), min_size=1, max_size=4))
_float = st.floats(-10, 10, allow_nan=False)


@st.composite
def map_and_vectors(draw):
    p, dims = draw(_shapes)
    total = sum(dims)
    D = draw(arrays(np.float64, (p, total), elements=_float))
    u = draw(arrays(np.float64, total, elements=_float))
    v = draw(arrays(np.float64, total, elements=_float))
    lam = draw(arrays(np.float64, p, elements=_float))
    part = BlockPartition(tuple(dims))
    return BlockLinearMap.from_dense(D, part), BlockVector(part, u), BlockVector(part, v), lam


@given(map_and_vectors(), _float, _float)
def test_apply_is_linear(mv, alpha, beta):
    A, u, v, _ = mv
    combo = BlockVector(u.partition, alpha * u.data + beta * v.data)
    lhs = A.apply(combo)
    rhs = alpha * A.apply(u) + beta * A.apply(v)
    scale = 1.0 + np.abs(A.dense).sum() * (abs(alpha) + abs(beta)) * 10
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)


@given(map_and_vectors())
def test_adjoint_identity(mv):
    A, v, _, lam = mv
    lhs = A.apply(v) @ lam
    rhs = sum(v.block(i) @ A.apply_adjoint_block(i, lam) for i in range(len(A)))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_psd_cross_term_identity(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n + 1, n))
    W = M.T @ M
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    sq = lambda z: z @ W @ z  # noqa: E731
    assert u @ W @ v == pytest.approx(0.5 * (sq(u) + sq(v) - sq(u - v)), abs=1e-10)
