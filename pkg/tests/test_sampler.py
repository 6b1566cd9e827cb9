import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blocksolve.sampler import make_streams, sample_subset, sample_subsets


def test_full_sample_is_forced_and_uses_no_randomness():
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    assert sample_subset(rng, 5, 5).tolist() == [0, 1, 2, 3, 4]
    assert rng.bit_generator.state == state


def test_single_block():
    assert sample_subset(np.random.default_rng(1), 1, 1).tolist() == [0]


@pytest.mark.parametrize("n", [0, 5, -1])
def test_bad_sizes(n):
    with pytest.raises(ValueError):
        sample_subset(np.random.default_rng(0), 4, n)


def test_subset_frequencies():
    rng = make_streams(123)["sampling"]
    draws = sample_subsets(rng, 4, 2, 60000)
    counts = Counter(map(tuple, draws.tolist()))
    assert set(counts) == set(itertools.combinations(range(4), 2))
    for c in counts.values():
        assert abs(c / 60000 - 1 / 6) <= 0.01


def test_marginal_inclusion():
    rng = make_streams(7)["sampling"]
    draws = sample_subsets(rng, 10, 3, 60000)
    freq = np.bincount(draws.ravel(), minlength=10) / 60000
    assert np.all(np.abs(freq - 0.3) <= 0.01)


@given(st.integers(1, 12).flatmap(lambda N: st.tuples(st.just(N), st.integers(1, N))),
       st.integers(0, 2**32 - 1))
def test_sorted_distinct_in_range(Nn, seed):
    N, n = Nn
    s = sample_subset(np.random.default_rng(seed), N, n)
    assert len(s) == n
    assert np.all(np.diff(s) > 0)
    assert s.min() >= 0 and s.max() < N


@given(st.integers(2, 9), st.integers(1, 9), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_batched_matches_sequential(N, n, count, seed):
    n = min(n, N)
    a, b = np.random.default_rng(seed), np.random.default_rng(seed)
    batch = sample_subsets(a, N, n, count)
    seq = np.array([sample_subset(b, N, n) for _ in range(count)])
    np.testing.assert_array_equal(batch, seq)
    assert a.bit_generator.state == b.bit_generator.state


def test_streams_are_reproducible_and_distinct():
    s1, s2 = make_streams(5), make_streams(5)
    assert s1["sampling"].random() == s2["sampling"].random()
    assert make_streams(5)["sampling"].random() != make_streams(5)["noise"].random()
