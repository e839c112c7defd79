import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mploc import geometry
from mploc.errors import NoDecomposition, ScaleTooSmall, SizeBudgetExceeded
from mploc.geometry import Cube


def brute_diag_distance(u):
    u = np.asarray(u)
    lo, hi = u.min(), u.max()
    best = None
    for x in itertools.product(range(lo, hi + 1), repeat=u.shape[1]):
        dist = np.max(np.abs(u - np.array(x)[None]))
        best = dist if best is None else min(best, dist)
    return best


def box_points(box):
    return {p for p in itertools.product(*[range(a, b + 1) for a, b in zip(box.lo, box.hi)])}


def brute_weak_witness(a, b, r0):
    """Exhaustive (side, J) search on explicit point sets."""
    for side, (this, other) in enumerate(((a, b), (b, a))):
        other_pts = set().union(*[box_points(x) for x in other.projections(pad=r0)])
        for k in range(1, this.n + 1):
            for J in itertools.combinations(range(this.n), k):
                inside = set().union(*[box_points(this.projection(j, r0)) for j in J])
                outside = set(other_pts)
                for j in range(this.n):
                    if j not in J:
                        outside |= box_points(this.projection(j, r0))
                if not inside & outside:
                    yield side, J


def test_sites_small_cases():
    assert geometry.sites(Cube([0], 1)).reshape(-1).tolist() == [-1, 0, 1]
    pts = geometry.sites(Cube([0, 0], 1)).reshape(-1, 2)
    assert len(pts) == 9
    assert pts[0].tolist() == [-1, -1] and pts[-1].tolist() == [1, 1]
    assert len(geometry.sites(Cube([[0, 0], [0, 0]], 2))) == 625


def test_sites_lexicographic_and_index_roundtrip():
    cube = Cube([[1, -2], [3, 0]], 1)
    pts = geometry.sites(cube).reshape(cube.size, -1)
    assert [tuple(p) for p in pts] == sorted(tuple(p) for p in pts)
    assert np.array_equal(cube.index_of(pts), np.arange(cube.size))


def test_sites_budget(monkeypatch):
    monkeypatch.setenv("MPLOC_MAX_DIM", "100")
    with pytest.raises(SizeBudgetExceeded):
        geometry.sites(Cube([0, 0], 5))


def test_projection_boxes():
    cube = Cube([[0, 1], [5, 5]], 2)
    assert cube.projection(1) == geometry.Box((3, 3), (7, 7))
    assert cube.projection(0, pad=1) == geometry.Box((-3, -2), (3, 4))


@pytest.mark.parametrize("u,expected", [((0, 0), 0), ((0, 100), 50), ((0, 4, 8), 4)])
def test_distance_to_diagonal_examples(u, expected):
    assert geometry.distance_to_diagonal(geometry.as_point(u)) == expected
    assert brute_diag_distance(geometry.as_point(u)) == expected


@given(st.integers(1, 3), st.integers(1, 2), st.data())
def test_distance_to_diagonal_brute(n, d, data):
    coords = data.draw(st.lists(st.integers(-10, 10), min_size=n * d, max_size=n * d))
    u = np.array(coords).reshape(n, d)
    assert geometry.distance_to_diagonal(u) == brute_diag_distance(u)


@pytest.mark.parametrize("u,fi", [((0, 0), True), ((0, 100), False), ((0, 24), True)])
def test_fully_interactive_examples(u, fi):
    assert geometry.is_fully_interactive(Cube(u, 2), 1) is fi


def test_weak_separability_examples():
    w = geometry.is_weakly_separable(Cube([0, 0], 2), Cube([100, 100], 2), 1)
    assert w == (0, (0, 1))
    assert geometry.is_weakly_separable(Cube([0, 0], 2), Cube([0, 4], 2), 1) is None
    w = geometry.is_weakly_separable(Cube([0, 10], 2), Cube([0, 0], 2), 1)
    assert w == (0, (1,))


@given(st.lists(st.integers(-15, 15), min_size=4, max_size=4), st.integers(0, 2), st.integers(1, 2))
def test_weak_separability_matches_point_set_oracle(c, L, r0):
    a, b = Cube(c[:2], L), Cube(c[2:], L)
    found = list(brute_weak_witness(a, b, r0))
    w = geometry.is_weakly_separable(a, b, r0)
    assert (w is None) == (not found)
    if found:
        assert tuple(w) == found[0]


def test_separable_examples():
    assert not geometry.is_separable(Cube([0, 10], 2), Cube([0, 0], 2), 1)
    assert geometry.is_separable(Cube([0, 0], 2), Cube([100, 100], 2), 1)
    a = Cube([3, 7], 2)
    assert not geometry.is_separable(a, a, 1)


def test_complete_separability_examples():
    assert geometry.is_completely_separable(Cube([0, 0], 2), Cube([100, 100], 2), 1)
    assert not geometry.is_completely_separable(Cube([0, 0], 2), Cube([0, 100], 2), 1)


@given(st.integers(0, 2), st.integers(1, 2), st.integers(-5, 5), st.integers(0, 30))
def test_far_fi_cubes_are_completely_separable(L, r0, shift, extra):
    n = 2
    a = Cube([0, 0], L)
    dist = n * (10 * L + 8 * r0) + 1 + extra
    b = Cube([dist, dist + shift % 3], L)
    assert geometry.is_fully_interactive(a, r0)
    if geometry.is_fully_interactive(b, r0):
        assert geometry.is_completely_separable(a, b, r0)


def test_canonical_decomposition_examples():
    assert geometry.canonical_decomposition(Cube([0, 100], 2), 1) == ((0,), (1,))
    assert geometry.canonical_decomposition(Cube([0, 1, 100], 2), 1) == ((0, 1), (2,))
    with pytest.raises(NoDecomposition):
        geometry.canonical_decomposition(Cube([0, 0], 2), 1)


def test_cluster_examples():
    dec = geometry.cluster_singular_centers([0, 5, 40], 3)
    groups = sorted(sorted(c.reshape(-1).tolist()) for c in dec.clusters)
    assert groups == [[0, 5], [40]]
    assert sorted(dec.center_diameters()) == [0.0, 5.0]
    assert dec.diameter_bound() == 63
    assert dec.gaps() == [35]
    assert geometry.cluster_singular_centers([], 3).clusters == []
    one = geometry.cluster_singular_centers([7], 3)
    assert len(one.clusters) == 1 and one.diameters() == [0]
    with pytest.raises(ScaleTooSmall):
        geometry.cluster_singular_centers([0], 2)


centers_1d = st.lists(st.integers(-300, 300), max_size=20)


@given(centers_1d, st.sampled_from([3, 4, 5]))
def test_clusters_partition_and_bounds(pts, l):
    dec = geometry.cluster_singular_centers(np.array(pts).reshape(-1, 1), l, cover_radius=l)
    flat = sorted(x for c in dec.clusters for x in c.reshape(-1).tolist())
    assert flat == sorted(set(pts))
    assert dec.satisfies_bounds()
    assert all(not dec.is_good(np.array([p])) for p in pts)
