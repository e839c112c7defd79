"""Spectra, Green's functions and the Sobolev matrix norm.

The Sobolev norm of a matrix ``M`` indexed by lattice sites is::

    ||M||_s^2 = C0 * sum_v (sup_{x - y = v} |M(x, y)|)^2 <v>^(2s)

For fixed ``M`` the map ``s -> log ||M||_s`` is a log-sum-exp of affine
functions of ``s`` and hence convex.  The non-singularity threshold
``(tau + delta*s) log L`` is affine in ``s``, so checking the inequality at
both ends of ``[s0, r_n]`` decides it on the whole interval.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from . import geometry, lattice_sums
from .errors import ConvergenceFailure, SingularEnergy
from .geometry import Cube, canonical_decomposition
from .model import HamiltonianMatrix, assemble

SINGULAR_TOL = 1e-12
GREEN_TOL = 1e-8


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float


def _as_array(H):
    return H.matrix if isinstance(H, HamiltonianMatrix) else np.asarray(H, dtype=float)


def eigenpairs(H):
    """Full symmetric eigendecomposition with a max-norm residual."""
    A = _as_array(H)
    try:
        w, Q = scipy.linalg.eigh(A)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(str(exc)) from exc
    residual = float(np.max(np.abs(A @ Q - Q * w[None, :]))) if A.size else 0.0
    return SpectrumReport(w, Q, residual)


def spectral_distance(E, eigenvalues):
    return float(np.min(np.abs(np.asarray(eigenvalues) - E)))


def green(H, E, eigenvalues=None, singular_tol=SINGULAR_TOL, green_tol=GREEN_TOL):
    """``(H - E)^-1`` with a verified residual.

    The residual ``||(H - E) G - I||_inf`` must not exceed
    ``green_tol * max(1, ||H - E||_inf ||G||_inf)``.

    Raises
    ------
    SingularEnergy
        If ``E`` is within ``singular_tol`` of the spectrum.
    """
    A = _as_array(H)
    if eigenvalues is None:
        eigenvalues = scipy.linalg.eigvalsh(A)
    if spectral_distance(E, eigenvalues) <= singular_tol:
        raise SingularEnergy(f"E = {E} is within {singular_tol} of the spectrum")
    shifted = A - E * np.eye(len(A))
    G = scipy.linalg.solve(shifted, np.eye(len(A)), assume_a="sym")
    # normwise backward error, so near-resonant energies are not rejected
    # merely because ||G|| is large
    res = np.linalg.norm(shifted @ G - np.eye(len(A)), np.inf)
    scale = max(1.0, np.linalg.norm(shifted, np.inf) * np.linalg.norm(G, np.inf))
    if res > green_tol * scale:
        raise SingularEnergy(f"Green's function residual {res:.3e} exceeds {green_tol} x {scale:.3e}")
    return G


def green_from_spectrum(report, E):
    """Green's function from a precomputed eigendecomposition."""
    Q, w = report.eigenvectors, report.eigenvalues
    return (Q / (w - E)[None, :]) @ Q.T


def default_c0(s0, dim):
    """Normalisation ``C0(s0) = 2^(2 s0 + 2) * sum_x <x>^(-2 s0)`` over ``Z^dim``.

    With this choice ``||P1 P2||_s0 <= ||P1||_s0 ||P2||_s0``: bounding
    ``<v> <= 2 max(<w>, <v - w>)`` and applying Young and Cauchy-Schwarz gives
    the product estimate with constant ``2^(s0+1) sqrt(S(s0) / C0) = 1``.
    """
    if s0 <= dim / 2:
        raise ValueError(f"need s0 > dim/2 = {dim / 2}")
    return 2.0 ** (2 * s0 + 2) * lattice_sums.bracket_sum(2 * s0, dim)


class OffsetProfile:
    """Per-offset suprema ``sup_{x-y=v} |M(x, y)|`` of a site-indexed matrix.

    Parameters
    ----------
    M : ndarray, shape (p, q)
    rows, cols : ndarray, shape (p, D) and (q, D), optional
        Lattice coordinates of row and column indices.  Default: the points
        ``0..p-1`` and ``0..q-1`` of ``Z``.
    """

    def __init__(self, M, rows=None, cols=None):
        M = np.abs(np.asarray(M, dtype=float))
        p, q = M.shape
        rows = np.arange(p).reshape(-1, 1) if rows is None else np.asarray(rows).reshape(p, -1)
        cols = np.arange(q).reshape(-1, 1) if cols is None else np.asarray(cols).reshape(q, -1)
        lo = min(rows.min(), cols.min())
        span = int(max(rows.max(), cols.max()) - lo)
        radix = 2 * span + 1
        weights = radix ** np.arange(rows.shape[1], dtype=np.int64)
        kr = (rows - lo) @ weights
        kc = (cols - lo) @ weights
        keys = (kr[:, None] - kc[None, :]).ravel()
        vals = M.ravel()
        uniq, inv = np.unique(keys, return_inverse=True)
        sup = np.zeros(len(uniq))
        np.maximum.at(sup, inv, vals)
        # any pair with a given key has the same offset; keep one per key
        rep = np.zeros(len(uniq), dtype=np.int64)
        rep[inv] = np.arange(len(keys))
        i, j = np.divmod(rep, q)
        offs = np.max(np.abs(rows[i] - cols[j]), axis=1)
        keep = sup > 0
        self.sup = sup[keep]
        self.bracket = np.maximum(offs[keep], 1).astype(float)

    def log_norm(self, s, C0):
        if self.sup.size == 0:
            return -np.inf
        terms = 2 * np.log(self.sup) + 2 * s * np.log(self.bracket)
        return 0.5 * (np.log(C0) + logsumexp(terms))

    def norm(self, s, C0):
        return float(np.exp(self.log_norm(s, C0)))


def sobolev_norm(M, s, s0, C0, rows=None, cols=None):
    """``||M||_s``; requires ``s >= s0``."""
    if s < s0:
        raise ValueError("s must be >= s0")
    return OffsetProfile(M, rows, cols).norm(s, C0)


def cube_coords(cube):
    return geometry.sites(cube).reshape(cube.size, -1)


@dataclass
class NormProfile:
    s_values: np.ndarray
    norms: np.ndarray
    C0: float
    s0: float

    def nondecreasing(self, rtol=1e-12):
        return bool(np.all(np.diff(self.norms) >= -rtol * self.norms[:-1]))

    def log_convex(self, atol=1e-9):
        """Discrete convexity of ``log ||G||_s`` on a possibly uneven grid."""
        s, y = self.s_values, np.log(self.norms)
        for k in range(1, len(s) - 1):
            t = (s[k] - s[k - 1]) / (s[k + 1] - s[k - 1])
            if y[k] > (1 - t) * y[k - 1] + t * y[k + 1] + atol * max(1.0, abs(y[k])):
                return False
        return True

    def to_rows(self):
        return [(float(s), float(v)) for s, v in zip(self.s_values, self.norms)]


def norm_profile(M, s_values, s0, C0, rows=None, cols=None):
    prof = OffsetProfile(M, rows, cols)
    s_values = np.asarray(s_values, dtype=float)
    return NormProfile(s_values, np.array([prof.norm(s, C0) for s in s_values]), C0, s0)


@dataclass
class CubeClassification:
    cube: Cube
    E: float
    dist: float
    resonant: bool
    singular: bool
    norm_profile: NormProfile = None
    schedule_hash: str = None
    thresholds: dict = field(default_factory=dict)

    def to_dict(self):
        prof = self.norm_profile
        return {
            "cube": self.cube.descriptor(),
            "E": self.E,
            "dist_to_spectrum": self.dist,
            "resonant": self.resonant,
            "singular": self.singular,
            "s_values": None if prof is None else prof.s_values.tolist(),
            "norms": None if prof is None else [v if np.isfinite(v) else None for v in prof.norms.tolist()],
            "C0": None if prof is None else prof.C0,
            "schedule_hash": self.schedule_hash,
            "thresholds": self.thresholds,
        }


def classify(cube, H, E, schedule, spectrum=None, C0=None, diagnostic_points=5,
             singular_tol=SINGULAR_TOL):
    """Resonance and (E, delta) non-singularity of ``cube``.

    ``E``-resonant means ``dist(E, sigma(H)) < L^-beta``.  The cube is
    non-singular if ``||G(E)||_s <= L^(tau_n + delta s)`` at ``s = s0`` and
    ``s = r_n`` (sufficient by log-convexity); a diagnostic grid of
    ``diagnostic_points`` values is stored as well.
    """
    level = schedule.level(cube.n)
    A = _as_array(H)
    report = spectrum if spectrum is not None else eigenpairs(A)
    dist = spectral_distance(E, report.eigenvalues)
    L = cube.radius
    logL = np.log(L) if L > 0 else -np.inf
    resonant = bool(dist < np.exp(-schedule.beta * logL)) if L > 0 else True
    C0 = default_c0(level.s0, cube.n * cube.d) if C0 is None else C0
    grid = np.linspace(level.s0, level.r, max(diagnostic_points, 2))
    thresholds = {"beta": schedule.beta, "tau": level.tau, "r_n": level.r,
                  "s0": level.s0, "delta": schedule.delta, "L": L}
    if dist <= singular_tol:
        prof = NormProfile(grid, np.full(len(grid), np.inf), C0, level.s0)
        return CubeClassification(cube, float(E), dist, True, True, prof,
                                  schedule.hash(), thresholds)
    G = green_from_spectrum(report, E)
    coords = cube_coords(cube)
    prof = norm_profile(G, grid, level.s0, C0, coords, coords)
    offsets = OffsetProfile(G, coords, coords)
    singular = False
    for s in (level.s0, level.r):
        if offsets.log_norm(s, C0) > (level.tau + schedule.delta * s) * logL:
            singular = True
    return CubeClassification(cube, float(E), dist, resonant, singular, prof,
                              schedule.hash(), thresholds)


def is_nonsingular(G, coords, level, delta, L, C0):
    """Endpoint NS test on a precomputed Green's function."""
    prof = OffsetProfile(G, coords, coords)
    logL = np.log(L)
    return all(prof.log_norm(s, C0) <= (level.tau + delta * s) * logL
               for s in (level.s0, level.r))


def pointwise_from_norm(norm_s, s, C0, offset_norm):
    """Entrywise bound ``|G(x, y)| <= C0^-1/2 ||G||_s <x - y>^-s``."""
    if offset_norm < 1:
        raise ValueError("offset_norm must be >= 1")
    return norm_s / np.sqrt(C0) * float(offset_norm) ** (-s)


def pointwise_decay_check(G, cube, r_n, zeta=19 / 20):
    """Check ``|G(x', x'')| <= |x' - x''|^-((1 - zeta) r_n)`` for ``|x' - x''| > L/2``.

    Returns ``(passed, worst_ratio)`` where the ratio compares each entry to
    its bound.  The decay only holds beyond an unspecified scale, so the
    result is reported, not asserted.
    """
    coords = cube_coords(cube)
    dist = np.max(np.abs(coords[:, None, :] - coords[None, :, :]), axis=-1)
    mask = dist > cube.radius / 2
    if not np.any(mask):
        return True, 0.0
    bound = dist[mask].astype(float) ** (-(1 - zeta) * r_n)
    ratio = float(np.max(np.abs(G[mask]) / bound))
    return ratio <= 1.0, ratio


def minkowski_spectrum(a, b):
    """Sorted multiset ``{x + y : x in a, y in b}``."""
    return np.sort(np.add.outer(np.asarray(a, float), np.asarray(b, float)).ravel())


def sub_configuration_cube(cube, J):
    return Cube(np.asarray(cube.center)[list(J)], cube.radius)


def pi_tensor_mismatch(cube, params, potential):
    """Compare ``sigma(H)`` of a PI cube with the sum set of its two subsystems.

    Returns ``(mismatch, (J, Jc))``.  The subsystems share the potential
    field, and since their padded projections are disjoint the interaction
    between them vanishes.
    """
    J, Jc = canonical = canonical_decomposition(cube, params.r0)
    full = scipy.linalg.eigvalsh(assemble(cube, params, potential).matrix)
    parts = []
    for idx in canonical:
        sub = sub_configuration_cube(cube, idx)
        parts.append(scipy.linalg.eigvalsh(assemble(sub, params.with_n(len(idx)), potential).matrix))
    combined = minkowski_spectrum(*parts)
    return float(np.max(np.abs(np.sort(full) - combined))), (J, Jc)

