"""Exact power sums over max-norm shells of Z^D.

The shell {x in Z^D : |x| = k} has (2k+1)^D - (2k-1)^D points, a polynomial
in k with only the parity-matching powers surviving.  Sums of |x|^(-theta)
over shells therefore reduce to finite combinations of Hurwitz zeta values.
"""

from math import comb

import numpy as np
from scipy.special import zeta

from .errors import DivergentTail


def shell_count(k, dim):
    """Number of lattice points of Z^dim at max-norm distance exactly ``k``."""
    k = np.asarray(k, dtype=np.int64)
    out = (2 * k + 1) ** dim - np.where(k > 0, (2 * k - 1) ** dim, 0)
    return out


def _shell_poly(dim):
    # (2k+1)^D - (2k-1)^D = sum_j coef_j k^j, only D-j odd survives
    return [(j, 2 * comb(dim, j) * 2**j) for j in range(dim) if (dim - j) % 2 == 1]


def tail_sum(theta, dim, L):
    """Exact ``sum_{x in Z^dim, |x| >= L} |x|^(-theta)`` for integer ``L >= 1``.

    Raises
    ------
    DivergentTail
        If ``theta <= dim`` (the series does not converge).
    """
    if theta <= dim:
        raise DivergentTail(f"sum of |x|^-{theta} over Z^{dim} diverges")
    if L < 1:
        raise ValueError("L must be >= 1")
    return float(sum(c * zeta(theta - j, L) for j, c in _shell_poly(dim)))


def tail_sum_direct(theta, dim, L, cutoff):
    """Shell-by-shell sum for ``L <= |x| < cutoff`` (no tail)."""
    k = np.arange(L, cutoff, dtype=np.int64)
    return float(np.sum(shell_count(k, dim) * k.astype(float) ** (-theta)))


def bracket_sum(two_s, dim):
    """``S = sum_{x in Z^dim} <x>^(-two_s)`` with ``<x> = max(1, |x|)``."""
    return 1.0 + tail_sum(two_s, dim, 1)
