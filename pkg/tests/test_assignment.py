import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncmot.assignment import solve_assignment


def brute_force(costs, valid=None):
    """(max pair count, min total cost at that count) over all partial matchings."""
    n, m = costs.shape
    valid = np.ones_like(costs, dtype=bool) if valid is None else valid
    best = (0, 0.0)
    k = min(n, m)
    for rows in itertools.combinations(range(n), k):
        for cols in itertools.permutations(range(m), k):
            pairs = [(i, j) for i, j in zip(rows, cols) if valid[i, j]]
            count, total = len(pairs), sum(costs[i, j] for i, j in pairs)
            if count > best[0] or (count == best[0] and total < best[1]):
                best = (count, total)
    return best


def test_two_by_two_example():
    res = solve_assignment([[1.0, 2.0], [2.0, 1.0]], gate=10.0)
    assert sorted(res.pairs) == [(0, 0), (1, 1)]
    assert res.total_cost([[1.0, 2.0], [2.0, 1.0]]) == 2.0


def test_gate_demotes_everything():
    res = solve_assignment([[1.0, 2.0], [2.0, 1.0]], gate=0.5)
    assert res.pairs == [] and res.unmatched_rows == [0, 1] and res.unmatched_cols == [0, 1]


def test_empty_matrix():
    res = solve_assignment(np.zeros((1, 0)), gate=1.0)
    assert res.pairs == [] and res.unmatched_rows == [0] and res.unmatched_cols == []
    res = solve_assignment(np.zeros((0, 3)), gate=1.0)
    assert res.unmatched_cols == [0, 1, 2]


def test_infinite_gate_rejected():
    with pytest.raises(ValueError):
        solve_assignment([[1.0]], gate=float("inf"))


def test_invalid_entries_never_paired():
    costs = np.array([[0.0, 5.0], [0.0, 9.0]])
    valid = np.array([[True, False], [True, True]])
    res = solve_assignment(costs, gate=100.0, valid=valid)
    assert sorted(res.pairs) == [(0, 0), (1, 1)]
    costs = np.array([[1.0, np.inf], [np.inf, np.nan]])
    res = solve_assignment(costs, gate=100.0)
    assert res.pairs == [(0, 0)]


def test_ties_resolve_to_lowest_columns():
    res = solve_assignment(np.ones((3, 3)), gate=2.0)
    assert res.pairs == [(0, 0), (1, 1), (2, 2)]
    res = solve_assignment(np.zeros((2, 4)), gate=1.0)
    assert res.pairs == [(0, 0), (1, 1)]


@pytest.mark.parametrize("seed", range(100))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 6, 2)
    costs = rng.integers(0, 5, (n, m)).astype(float) if seed % 2 else rng.uniform(0, 1, (n, m))
    valid = rng.uniform(size=(n, m)) > 0.2 if seed % 3 == 0 else None
    res = solve_assignment(costs, gate=1e9, valid=valid)
    count, total = brute_force(costs, valid)
    assert len(res.pairs) == count
    assert res.total_cost(costs) == pytest.approx(total, abs=1e-12)


matrices = st.integers(1, 6).flatmap(
    lambda n: st.integers(1, 6).flatmap(
        lambda m: st.lists(st.floats(0, 10), min_size=n * m, max_size=n * m).map(lambda v: np.array(v).reshape(n, m))
    )
)


@settings(max_examples=200, deadline=None)
@given(costs=matrices, g1=st.floats(0, 10), g2=st.floats(0, 10))
def test_partition_and_gate_monotonicity(costs, g1, g2):
    lo, hi = sorted((g1, g2))
    a, b = solve_assignment(costs, lo), solve_assignment(costs, hi)
    for res, gate in ((a, lo), (b, hi)):
        n, m = costs.shape
        assert len(res.pairs) + len(res.unmatched_rows) == n
        assert len(res.pairs) + len(res.unmatched_cols) == m
        assert sorted([i for i, _ in res.pairs] + res.unmatched_rows) == list(range(n))
        assert sorted([j for _, j in res.pairs] + res.unmatched_cols) == list(range(m))
        assert all(costs[i, j] <= gate for i, j in res.pairs)
    assert len(b.pairs) >= len(a.pairs)
