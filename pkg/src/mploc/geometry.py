"""n-particle lattice cubes, projections and separability predicates.

A configuration of ``n`` particles in ``Z^d`` is an integer array of shape
``(n, d)``; row ``j`` holds the position of particle ``j``.  All distances use
the max-norm.  Projections of cubes onto single particles are axis-aligned
integer boxes, so every disjointness test below is exact interval arithmetic.

Particle indices are 0-based throughout.
"""

import itertools
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from .errors import NoDecomposition, ScaleTooSmall, SizeBudgetExceeded

DEFAULT_MAX_DIM = 5000


def max_dim():
    """Matrix dimension cap, overridable through ``MPLOC_MAX_DIM``."""
    return int(os.environ.get("MPLOC_MAX_DIM", DEFAULT_MAX_DIM))


def as_point(x, d=None):
    """Coerce ``x`` to an integer configuration array of shape ``(n, d)``.

    A flat sequence is read as ``n`` particles in one dimension unless ``d``
    is given, in which case it is reshaped to ``(-1, d)``.
    """
    a = np.asarray(x, dtype=np.int64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if d is None else a.reshape(-1, d)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"cannot interpret {x!r} as an n x d configuration")
    return a


def max_norm(x):
    return int(np.max(np.abs(np.asarray(x)))) if np.size(x) else 0


def bracket(x):
    """``<x> = max(1, |x|)``."""
    return max(1, max_norm(x))


class Box(NamedTuple):
    """Integer box ``[lo, hi]`` in ``Z^d`` (inclusive bounds)."""

    lo: tuple
    hi: tuple

    def intersects(self, other):
        return all(a_lo <= b_hi and b_lo <= a_hi
                   for a_lo, a_hi, b_lo, b_hi in zip(self.lo, self.hi, other.lo, other.hi))

    def distance(self, other):
        """Max-norm distance between the two lattice boxes (0 if they meet)."""
        gaps = [max(0, b_lo - a_hi, a_lo - b_hi)
                for a_lo, a_hi, b_lo, b_hi in zip(self.lo, self.hi, other.lo, other.hi)]
        return max(gaps)

    def contains(self, other):
        return all(a_lo <= b_lo and b_hi <= a_hi
                   for a_lo, a_hi, b_lo, b_hi in zip(self.lo, self.hi, other.lo, other.hi))

    def hull(self, other):
        return Box(tuple(map(min, self.lo, other.lo)), tuple(map(max, self.hi, other.hi)))


def _unions_disjoint(boxes_a, boxes_b):
    return not any(a.intersects(b) for a in boxes_a for b in boxes_b)


@dataclass(frozen=True)
class Cube:
    """The n-particle cube of radius ``radius`` around ``center``.

    It is the Cartesian product of the single-particle boxes
    ``[u_j - L, u_j + L]^d``, so it has ``(2L+1)^(nd)`` sites.
    """

    center: tuple
    radius: int

    def __init__(self, center, radius, d=None):
        c = as_point(center, d)
        if int(radius) < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "center", tuple(tuple(int(v) for v in row) for row in c))
        object.__setattr__(self, "radius", int(radius))

    @property
    def n(self):
        return len(self.center)

    @property
    def d(self):
        return len(self.center[0])

    @property
    def u(self):
        return np.array(self.center, dtype=np.int64)

    @property
    def size(self):
        return (2 * self.radius + 1) ** (self.n * self.d)

    @property
    def side(self):
        return 2 * self.radius + 1

    def projection(self, j, pad=0):
        """Box ``Pi_j`` of the cube enlarged by ``pad`` (i.e. of radius L + pad)."""
        row = self.center[j]
        R = self.radius + pad
        return Box(tuple(v - R for v in row), tuple(v + R for v in row))

    def projections(self, J=None, pad=0):
        J = range(self.n) if J is None else J
        return [self.projection(j, pad) for j in J]

    def hull(self, pad=0):
        """Smallest single-particle box containing every projection."""
        boxes = self.projections(pad=pad)
        out = boxes[0]
        for b in boxes[1:]:
            out = out.hull(b)
        return out

    def enlarged(self, pad):
        return Cube(self.center, self.radius + pad)

    def contains_cube(self, other):
        if (other.n, other.d) != (self.n, self.d):
            return False
        return all(self.projection(j).contains(other.projection(j)) for j in range(self.n))

    def contains_points(self, pts):
        pts = np.asarray(pts).reshape(-1, self.n, self.d)
        return np.all(np.abs(pts - self.u[None]) <= self.radius, axis=(1, 2))

    def index_of(self, pts):
        """Positions of configurations ``pts`` in the lexicographic site order."""
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, self.n * self.d)
        local = pts - (self.u.reshape(-1) - self.radius)[None]
        if np.any(local < 0) or np.any(local >= self.side):
            raise IndexError("configuration outside the cube")
        weights = self.side ** np.arange(self.n * self.d - 1, -1, -1, dtype=np.int64)
        return local @ weights

    def descriptor(self):
        return {"center": [list(r) for r in self.center], "radius": self.radius}


def sites(cube, max_size=None):
    """Lexicographically ordered configurations of ``cube``, shape ``(M, n, d)``.

    This order is the canonical row/column order of every assembled matrix.

    Raises
    ------
    SizeBudgetExceeded
        If ``(2L+1)^(nd)`` is larger than ``max_size`` (default: ``max_dim()``).
    """
    limit = max_dim() if max_size is None else max_size
    if cube.size > limit:
        raise SizeBudgetExceeded(
            f"cube with {cube.size} sites exceeds maximum dimension {limit}")
    D = cube.n * cube.d
    offsets = np.indices((cube.side,) * D, dtype=np.int64).reshape(D, -1).T
    flat = offsets - cube.radius + cube.u.reshape(1, -1)
    return flat.reshape(-1, cube.n, cube.d)


def distance_to_diagonal(u):
    """``min_x max_j |u_j - x|``: max-norm distance of ``u`` to the diagonal.

    The minimisation separates over coordinates; in each one the optimum sits
    at the midpoint of the particles' spread.
    """
    u = as_point(u)
    spread = u.max(axis=0) - u.min(axis=0)
    return int(np.max((spread + 1) // 2))


def is_fully_interactive(cube, r0):
    """FI iff the centre is within ``2n(L + r0)`` of the diagonal; PI otherwise."""
    return distance_to_diagonal(cube.center) <= 2 * cube.n * (cube.radius + r0)


class SeparationWitness(NamedTuple):
    side: int  # 0 -> first cube, 1 -> second cube
    J: tuple


def _subsets(n):
    """Nonempty subsets of range(n) in lexicographic order of sorted tuples."""
    subs = [c for k in range(1, n + 1) for c in itertools.combinations(range(n), k)]
    return sorted(subs)


def _check_pair(a, b):
    if (a.n, a.d) != (b.n, b.d):
        raise ValueError("cubes must have equal particle number and dimension")
    if a.radius != b.radius:
        raise ValueError("cubes must have equal radii")


def is_weakly_separable(a, b, r0):
    """Search every (side, J) for a weak-separability witness.

    Returns the first witness found, or ``None``.  ``J`` may be the full
    index set, in which case the condition reduces to the side's full
    projection missing the other cube's full projection.
    """
    _check_pair(a, b)
    for side, (this, other) in enumerate(((a, b), (b, a))):
        other_full = other.projections(pad=r0)
        for J in _subsets(this.n):
            Jc = [j for j in range(this.n) if j not in J]
            if _unions_disjoint(this.projections(J, r0),
                                this.projections(Jc, r0) + other_full):
                return SeparationWitness(side, J)
    return None


def is_separable(a, b, r0):
    return (is_weakly_separable(a, b, r0) is not None
            and max_norm(a.u - b.u) > 11 * a.n * a.radius)


def is_completely_separable(a, b, r0):
    _check_pair(a, b)
    return _unions_disjoint(a.projections(pad=r0), b.projections(pad=r0))


def canonical_decomposition(cube, r0):
    """Split the particles of a PI cube into two non-interacting groups.

    Returns ``(J, Jc)`` with the lexicographically smallest nonempty ``J``
    whose padded projection misses that of its complement.

    Raises
    ------
    NoDecomposition
        If the cube is fully interactive.
    """
    if is_fully_interactive(cube, r0):
        raise NoDecomposition("cube is fully interactive")
    for J in _subsets(cube.n):
        Jc = tuple(j for j in range(cube.n) if j not in J)
        if Jc and _unions_disjoint(cube.projections(J, r0), cube.projections(Jc, r0)):
            return J, Jc
    raise NoDecomposition("no separating index set found")  # pragma: no cover


@dataclass
class ClusterDecomposition:
    """Clusters of bad-cube centres and the induced good/bad split.

    ``clusters[j]`` holds the centres forming class ``j``; the bad set
    ``Omega_j`` is the union of the max-norm balls of radius
    ``cover_radius`` around them.
    """

    clusters: list
    l: int
    cover_radius: int = 0
    n_input: int = field(default=0)

    def center_diameters(self):
        return [float(np.max(pdist(c, "chebyshev"))) if len(c) > 1 else 0.0
                for c in self.clusters]

    def diameters(self):
        """Diameters of the sets ``Omega_j``."""
        return [dc + 2 * self.cover_radius for dc in self.center_diameters()]

    def gaps(self):
        """Pairwise max-norm distances between distinct ``Omega_j``."""
        out = []
        for a, b in itertools.combinations(self.clusters, 2):
            dmin = np.min(np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=-1))
            out.append(max(0, int(dmin) - 2 * self.cover_radius))
        return out

    def is_good(self, x):
        """True if site ``x`` lies outside every ``Omega_j``."""
        x = np.asarray(x).reshape(-1)
        for c in self.clusters:
            if np.any(np.max(np.abs(c - x[None]), axis=1) <= self.cover_radius):
                return False
        return True

    def diameter_bound(self):
        return (2 * self.n_input + 1) * self.l**2

    def satisfies_bounds(self):
        bound = self.diameter_bound()
        return (all(dm <= bound for dm in self.diameters())
                and all(g >= self.l**2 for g in self.gaps()))


def cluster_singular_centers(centers, l, cover_radius=0, c_tilde=1.0):
    """Group bad-cube centres into well separated clusters.

    Two centres are chained when they can be joined by centres with
    consecutive max-norm gaps at most ``2 l^2``; the clusters are the
    connected components of that relation.

    Parameters
    ----------
    centers : array_like, shape (J, D)
        Centres of the bad cubes, flattened to ``Z^D``.
    l : int
        Scale parameter; must exceed ``2 * c_tilde``.
    cover_radius : int
        Radius of the bad cubes around each centre, at most ``c_tilde * l``.
    c_tilde : float
        Ratio between bad-cube radius and ``l``.

    Raises
    ------
    ScaleTooSmall
        If ``l <= 2 * c_tilde``.
    """
    if l <= 2 * c_tilde:
        raise ScaleTooSmall(f"need l > 2*c_tilde = {2 * c_tilde}, got l = {l}")
    if cover_radius > c_tilde * l:
        raise ValueError("cover_radius must not exceed c_tilde * l")
    pts = np.asarray(centers, dtype=np.int64)
    if pts.size == 0:
        return ClusterDecomposition([], l, cover_radius, 0)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    pts = np.unique(pts, axis=0)
    if len(pts) == 1:
        return ClusterDecomposition([pts], l, cover_radius, 1)
    adj = squareform(pdist(pts, "chebyshev")) <= 2 * l**2
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    clusters = [pts[labels == k] for k in range(n_comp)]
    return ClusterDecomposition(clusters, l, cover_radius, len(pts))
