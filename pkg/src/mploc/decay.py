"""Eigenfunction localization diagnostics.

Decay exponents are fitted to the shell-maximum envelope of ``|phi|``
around its localization centre: for each max-norm radius ``k`` the envelope
is ``max_{|x - c| >= k} |phi(x)|``, which is what a pointwise power-law
bound controls and which ignores the sign changes and accidental zeros of
individual eigenvectors.
"""

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import linregress

from . import geometry, lattice_sums
from .errors import CubeNotInterior, InsufficientShells, ZeroAtOrigin, ZeroVector
from .spectral import cube_coords, eigenpairs, green

FLOOR_TOL = 1e-14
EXP_CAP = 64.0


def localization_center(vec, sites):
    """Site of maximal ``|vec|``; the first one in ``sites`` order wins ties.

    Parameters
    ----------
    vec : ndarray, shape (M,)
    sites : ndarray, shape (M, D)
        Flattened coordinates in lexicographic order.
    """
    a = np.abs(np.asarray(vec))
    if not np.any(a > 0):
        raise ZeroVector("vector is identically zero")
    return np.asarray(sites)[int(np.argmax(a))]


@dataclass
class DecayFit:
    eigen_index: int
    E: float
    center: tuple
    exponent: float
    fit_r2: float
    envelope_points: int
    boundary_margin: int
    capped: bool = False

    def to_dict(self):
        return asdict(self)


def shell_envelope(vec, sites, center):
    """``(radii, env)`` with ``env[k] = max_{|x - center| >= k} |vec(x)|``."""
    a = np.abs(np.asarray(vec, dtype=float))
    k = np.max(np.abs(np.asarray(sites) - np.asarray(center)[None, :]), axis=1)
    shell = np.zeros(k.max() + 1)
    np.maximum.at(shell, k, a)
    env = np.maximum.accumulate(shell[::-1])[::-1]
    return np.arange(len(env)), env


def fit_power_exponent(vec, sites, center, min_radius=2, max_radius=None,
                       floor_tol=FLOOR_TOL, exp_cap=EXP_CAP, eigen_index=-1, E=float("nan"),
                       boundary_margin=None):
    """Least-squares power-law exponent of the shell envelope.

    The envelope is normalised by its peak.  Shells below ``floor_tol`` are
    dropped; when at least half of the annulus is below the floor the
    exponent is reported as ``exp_cap``.

    Raises
    ------
    InsufficientShells
        If fewer than three usable shells remain.
    """
    if min_radius < 2:
        raise ValueError("min_radius must be >= 2")
    radii, env = shell_envelope(vec, sites, center)
    if env[0] == 0:
        raise ZeroVector("vector is identically zero")
    env = env / env[0]
    top = radii[-1] if max_radius is None else min(max_radius, radii[-1])
    if top < min_radius:
        raise InsufficientShells("annulus is empty")
    sel = slice(min_radius, top + 1)
    rad, val = radii[sel], env[sel]
    usable = val >= floor_tol
    center = tuple(int(c) for c in np.asarray(center).reshape(-1))
    margin = -1 if boundary_margin is None else int(boundary_margin)
    if np.count_nonzero(~usable) * 2 >= len(val):
        return DecayFit(eigen_index, float(E), center, float(exp_cap), float("nan"),
                        int(np.count_nonzero(usable)), margin, True)
    if np.count_nonzero(usable) < 3:
        raise InsufficientShells(f"only {np.count_nonzero(usable)} usable shells")
    fit = linregress(np.log(rad[usable]), np.log(val[usable]))
    exponent = min(-float(fit.slope), exp_cap)
    return DecayFit(eigen_index, float(E), center, exponent, float(fit.rvalue ** 2),
                    int(np.count_nonzero(usable)), margin, exponent >= exp_cap)


def boundary_margin(cube, point):
    """Max-norm distance from ``point`` to the complement of ``cube``, minus one."""
    off = np.abs(np.asarray(point).reshape(-1) - cube.u.reshape(-1))
    return int(cube.radius - off.max())


def decay_table(H, min_radius=2, floor_tol=FLOOR_TOL, exp_cap=EXP_CAP, spectrum=None):
    """Fit every eigenvector of ``H`` (a :class:`HamiltonianMatrix`).

    The fit runs out to the boundary margin of each localization centre;
    eigenvectors whose margin is below ``min_radius + 2`` are skipped.
    """
    spec = eigenpairs(H) if spectrum is None else spectrum
    coords = cube_coords(H.cube)
    rows = []
    for j, E in enumerate(spec.eigenvalues):
        vec = spec.eigenvectors[:, j]
        c = localization_center(vec, coords)
        m = boundary_margin(H.cube, c)
        if m < min_radius + 2:
            continue
        rows.append(fit_power_exponent(vec, coords, c, min_radius, m, floor_tol, exp_cap,
                                       eigen_index=j, E=E, boundary_margin=m))
    return rows


def decay_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eigen_index", "E", "center", "exponent", "r2", "margin"])
    for f in rows:
        w.writerow([f.eigen_index, repr(f.E), " ".join(map(str, f.center)),
                    repr(f.exponent), repr(f.fit_r2), f.boundary_margin])
    return buf.getvalue()


@dataclass
class PoissonCheck:
    big_box: object
    sub_cube: object
    E: float
    max_abs_residual: float
    truncation_bound: float

    @property
    def ok(self):
        return self.max_abs_residual <= self.truncation_bound + 10 * 1e-8

    def to_dict(self):
        return {"big_box": self.big_box.descriptor(), "sub_cube": self.sub_cube.descriptor(),
                "E": self.E, "max_abs_residual": self.max_abs_residual,
                "truncation_bound": self.truncation_bound, "ok": self.ok}


def poisson_residual(big_H, eig, sub_cube):
    """Residual of the Poisson identity on ``sub_cube`` for an eigenpair of ``big_H``.

    Evaluates ``phi(x) + sum G_sub(E)(x, x') H(x', x'') phi(x'')`` over
    ``x, x'`` in the sub-cube and ``x''`` in the rest of the big box; off the
    diagonal ``H = T / g``.  ``truncation_bound`` bounds the hopping terms to
    sites outside the big box, which the finite computation omits, using
    ``|phi| <= ||phi||_2`` and exact lattice tail sums.

    Raises
    ------
    CubeNotInterior
        If ``sub_cube`` does not sit strictly inside the big box.
    SingularEnergy
        If ``E`` is (numerically) in the spectrum of the sub-cube operator.
    """
    E, phi = eig
    big = big_H.cube
    off = np.max(np.abs(sub_cube.u - big.u)) if sub_cube.n == big.n else None
    if off is None or sub_cube.radius + off >= big.radius:
        raise CubeNotInterior("sub-cube must lie strictly inside the big box")
    inner = big.index_of(geometry.sites(sub_cube))
    mask = np.ones(big_H.size, dtype=bool)
    mask[inner] = False
    outer = np.flatnonzero(mask)
    G = green(big_H.matrix[np.ix_(inner, inner)], E)
    phi = np.asarray(phi, dtype=float)
    res = phi[inner] + G @ (big_H.matrix[np.ix_(inner, outer)] @ phi[outer])
    # hopping tails leaving the big box, particle by particle
    params = big_H.params
    pts = geometry.sites(sub_cube)
    gap = big.radius + 1 - np.max(np.abs(pts - big.u[None]), axis=2)
    tails = np.vectorize(lambda k: lattice_sums.tail_sum(params.r, big.d, int(k)))(gap)
    reach = tails.sum(axis=1)
    bound = np.max(np.abs(G) @ reach) * np.linalg.norm(phi) / abs(params.g)
    return PoissonCheck(big, sub_cube, float(E), float(np.max(np.abs(res))), float(bound))


def generalized_growth_check(vec, sites, exponent):
    """Smallest ``C`` with ``|phi(x)| <= C (1 + |x|)^exponent`` after ``phi(0) = 1``.

    ``exponent`` is ``Nd/2 + eps1``.  Returns ``(C, ok)`` where ``ok`` only
    says ``C`` is finite, which always holds on a finite box.
    """
    sites = np.asarray(sites)
    at0 = np.flatnonzero(~np.any(sites, axis=1))
    if at0.size == 0:
        raise ValueError("origin is not among the sites")
    v = np.asarray(vec, dtype=float)
    if v[at0[0]] == 0:
        raise ZeroAtOrigin("phi(0) = 0 cannot be normalised")
    v = v / v[at0[0]]
    weight = (1.0 + np.max(np.abs(sites), axis=1)) ** exponent
    C = float(np.max(np.abs(v) / weight))
    return C, bool(np.isfinite(C))
