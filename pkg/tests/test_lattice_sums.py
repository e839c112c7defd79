import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mploc import lattice_sums
from mploc.errors import DivergentTail


def brute_shell(k, dim):
    pts = itertools.product(range(-k, k + 1), repeat=dim)
    return sum(1 for p in pts if max(map(abs, p)) == k)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_shell_count_matches_enumeration(dim):
    for k in range(5):
        assert lattice_sums.shell_count(k, dim) == brute_shell(k, dim)


@given(dim=st.integers(1, 4), k=st.integers(1, 200))
def test_shell_polynomial_reproduces_count(dim, k):
    poly = sum(c * k**j for j, c in lattice_sums._shell_poly(dim))
    assert poly == int(lattice_sums.shell_count(k, dim))


@pytest.mark.parametrize("theta,dim,L", [(4, 1, 10), (3.5, 2, 5), (7, 3, 2), (2.5, 1, 1)])
def test_tail_sum_against_direct_summation(theta, dim, L):
    # direct part plus an integral bound on the remainder
    cutoff = 200_000 if dim == 1 else 20_000
    direct = lattice_sums.tail_sum_direct(theta, dim, L, cutoff)
    exact = lattice_sums.tail_sum(theta, dim, L)
    rest = exact - direct
    lead = 2 * dim * 2 ** (dim - 1) * cutoff ** (dim - theta) / (theta - dim) * 1.01
    assert -1e-14 * exact <= rest <= lead + 1e-14 * exact


def test_tail_sum_reference_value():
    # 2 * sum_{k >= 10} k^-4
    assert lattice_sums.tail_sum(4, 1, 10) == pytest.approx(7.733e-4, rel=1e-3)


def test_divergent_tail():
    with pytest.raises(DivergentTail):
        lattice_sums.tail_sum(2, 2, 3)


def test_bracket_sum_one_dim():
    from scipy.special import zeta
    assert lattice_sums.bracket_sum(3.0, 1) == pytest.approx(1 + 2 * zeta(3.0))
