"""Finite-volume n-particle Hamiltonians with power-law hopping.

On a cube ``Lambda`` the operator is::

    H = g^-1 (T + U) + V

where ``T`` moves one particle at a time with amplitude ``<y_j - x_j>^-r``,
``U`` is a pair interaction of finite range ``r0`` and ``V`` sums an IID
single-site potential over the particles.  Restriction to the cube is plain
truncation.

The diagonal of ``T`` is a convention (``diagonal_hopping``):

``"per_particle"`` (default)
    ``T`` is the sum over particles of single-particle hopping operators,
    each with ``<0>^-r = 1`` on the diagonal, so ``T(x, x) = n``.  This is the
    only convention under which a partially interactive cube is an exact
    tensor sum of its subsystems.
``"unit"``
    ``T(x, x) = 1`` regardless of ``n``.
``"zero"``
    No diagonal hopping.

All three differ by a multiple of the identity and leave eigenvectors and
spectral gaps unchanged.
"""

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import geometry
from .errors import UnsupportedDistribution, WindowTooSmall
from .geometry import Box, Cube

DIAGONAL_CONVENTIONS = ("per_particle", "unit", "zero")


@dataclass(frozen=True)
class DisorderSpec:
    """Single-site distribution of the random potential.

    ``uniform`` is uniform on ``[-M, M]``.  ``power_pushed`` is
    ``M sign(W) |W|^(1/rho)`` with ``W`` uniform on ``[-1, 1]``; for
    ``rho <= 1`` it is Hoelder continuous of order ``rho``.
    """

    kind: str = "uniform"
    M: float = 1.0
    rho: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("uniform", "power_pushed"):
            raise UnsupportedDistribution(self.kind)
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    @property
    def holder_order(self):
        return 1.0 if self.kind == "uniform" else min(self.rho, 1.0)

    def draw(self, rng, size):
        w = rng.uniform(-1.0, 1.0, size=size)
        if self.kind == "uniform":
            return self.M * w
        return self.M * np.sign(w) * np.abs(w) ** (1.0 / self.rho)

    def cdf(self, t):
        z = np.clip(np.asarray(t, dtype=float) / self.M, -1.0, 1.0)
        if self.kind == "uniform":
            return 0.5 * (1.0 + z)
        return 0.5 * (1.0 + np.sign(z) * np.abs(z) ** self.rho)


def holder_modulus(dist, eps):
    """Continuity modulus ``sup_t mu([t, t + eps])`` in closed form.

    For ``power_pushed`` the density ``rho |v|^(rho-1) / (2 M^rho)`` is
    symmetric and monotone in ``|v|``: the worst window is centred at 0 when
    ``rho <= 1`` and sits at an end of the support when ``rho >= 1``.
    """
    eps = float(eps)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0:
        return 0.0
    if dist.kind == "uniform" or dist.rho == 1.0:
        return min(1.0, eps / (2.0 * dist.M))
    if dist.kind == "power_pushed":
        if dist.rho < 1.0:
            return min(1.0, (eps / (2.0 * dist.M)) ** dist.rho)
        return float(min(1.0, dist.cdf(dist.M) - dist.cdf(dist.M - eps)))
    raise UnsupportedDistribution(dist.kind)


def holder_constant(dist):
    """``K_rho(mu)`` for the distribution's Hoelder order (see ``holder_order``)."""
    if dist.kind == "uniform":
        return 2.0 * dist.M
    if dist.rho <= 1.0:
        return (2.0 * dist.M) ** dist.rho
    # density is bounded by rho / (2M); the order-1 constant follows
    return 2.0 * dist.M / dist.rho


def range_indicator_kernel(u_amp, r0):
    """Default interaction ``U(a, b) = u_amp * 1{|a - b| < r0}``."""
    def kernel(a, b):
        return u_amp * (np.max(np.abs(a - b), axis=-1) < r0)
    return kernel


@dataclass(frozen=True)
class ModelParams:
    n: int = 1
    d: int = 1
    g: float = 1.0
    r: float = 4.0
    r0: int = 1
    u_amp: float = 1.0
    M1: float = None
    disorder: DisorderSpec = field(default_factory=DisorderSpec)
    diagonal_hopping: str = "per_particle"
    kernel: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.M1 is None:
            object.__setattr__(self, "M1", abs(float(self.u_amp)))
        if isinstance(self.disorder, dict):
            object.__setattr__(self, "disorder", DisorderSpec(**self.disorder))
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if self.g == 0:
            raise ValueError("coupling g must be nonzero")
        if abs(self.u_amp) > self.M1:
            raise ValueError(f"|u_amp| = {abs(self.u_amp)} exceeds M1 = {self.M1}")
        if self.r <= self.n * self.d:
            raise ValueError(f"hopping exponent r = {self.r} must exceed nd = {self.n * self.d}")
        if self.r0 < 1:
            raise ValueError("interaction range r0 must be >= 1")
        if self.diagonal_hopping not in DIAGONAL_CONVENTIONS:
            raise ValueError(f"diagonal_hopping must be one of {DIAGONAL_CONVENTIONS}")

    @property
    def M(self):
        return self.disorder.M

    def interaction_kernel(self):
        return self.kernel if self.kernel is not None else range_indicator_kernel(self.u_amp, self.r0)

    def with_n(self, n):
        return replace(self, n=n)

    def to_dict(self):
        out = asdict(self)
        out.pop("kernel")
        return out


def hopping_entry(x, y, r, diagonal="unit"):
    """``T(x, y)``: ``<y_j - x_j>^-r`` if only particle ``j`` moved, else 0.

    ``diagonal`` selects ``T(x, x)`` (see module docstring); with
    ``"per_particle"`` it equals the number of particles.
    """
    x = geometry.as_point(x)
    y = geometry.as_point(y, x.shape[1])
    moved = np.flatnonzero(np.any(x != y, axis=1))
    if moved.size == 0:
        return {"unit": 1.0, "per_particle": float(len(x)), "zero": 0.0}[diagonal]
    if moved.size > 1:
        return 0.0
    j = moved[0]
    return float(geometry.bracket(y[j] - x[j])) ** (-r)


def interaction_energy(x, r0, u_amp, kernel=None):
    """``sum_{j1 < j2} U(x_j1, x_j2)`` for one configuration."""
    x = geometry.as_point(x)
    kernel = kernel or range_indicator_kernel(u_amp, r0)
    return float(sum(kernel(x[a], x[b]) for a in range(len(x)) for b in range(a + 1, len(x))))


def _interaction_diagonal(pts, kernel):
    n = pts.shape[1]
    out = np.zeros(len(pts))
    for a in range(n):
        for b in range(a + 1, n):
            out += kernel(pts[:, a, :], pts[:, b, :])
    return out


def single_particle_hopping(L, d, r):
    """Hopping matrix of one particle in a box of radius ``L`` (zero diagonal)."""
    box = geometry.sites(Cube(np.zeros((1, d), dtype=int), L)).reshape(-1, d)
    dist = np.max(np.abs(box[:, None, :] - box[None, :, :]), axis=-1)
    out = np.maximum(dist, 1).astype(float) ** (-r)
    np.fill_diagonal(out, 0.0)
    return out


def kinetic_matrix(cube, params):
    """``T_Lambda`` as a dense matrix in the lexicographic site order.

    Built as a Kronecker sum of per-particle hopping matrices, which is exact
    because every nonzero off-diagonal entry moves a single particle.
    """
    geometry.sites(cube)  # budget check
    t1 = single_particle_hopping(cube.radius, cube.d, params.r)
    m = t1.shape[0]
    out = np.zeros((cube.size, cube.size))
    for j in range(cube.n):
        left = np.eye(m**j)
        right = np.eye(m ** (cube.n - j - 1))
        out += np.kron(np.kron(left, t1), right)
    diag = {"unit": 1.0, "per_particle": float(cube.n), "zero": 0.0}[params.diagonal_hopping]
    out[np.diag_indices_from(out)] += diag
    return out


@dataclass(frozen=True)
class PotentialField:
    """IID single-site potential on an integer box of ``Z^d``."""

    window: Box
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(h - l + 1 for l, h in zip(self.window.lo, self.window.hi))
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match window {shape}")

    @property
    def d(self):
        return len(self.window.lo)

    def at(self, coords):
        """Potential at single-particle sites ``coords`` (shape ``(..., d)``)."""
        c = np.asarray(coords, dtype=np.int64)
        idx = tuple((c[..., i] - self.window.lo[i]) for i in range(self.d))
        for i, ix in enumerate(idx):
            if np.any(ix < 0) or np.any(ix >= self.values.shape[i]):
                raise WindowTooSmall("site outside the potential window")
        return self.values[idx]

    def shifted(self, c):
        return PotentialField(self.window, self.values + c)

    def covers(self, cube):
        return all(self.window.contains(b) for b in cube.projections())

    def to_json(self):
        pts = np.indices(self.values.shape).reshape(self.d, -1).T + np.array(self.window.lo)
        flat = self.values.reshape(-1)
        return json.dumps({",".join(map(str, p)): float(v) for p, v in zip(pts.tolist(), flat)})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        pts = np.array([[int(t) for t in k.split(",")] for k in data])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        values = np.empty(tuple(hi - lo + 1))
        for p, v in zip(pts, data.values()):
            values[tuple(p - lo)] = v
        return cls(Box(tuple(lo.tolist()), tuple(hi.tolist())), values)


def rng_for(seed, stream):
    """Independent generator for ``(seed, stream)``; streams never overlap."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream),)))


def sample_potential(window, dist, stream=0):
    """Draw IID potential values on ``window`` from the stream ``(dist.seed, stream)``.

    Values are drawn in C order over the window, so a fixed window, seed and
    stream reproduce the field bit for bit.
    """
    shape = tuple(h - l + 1 for l, h in zip(window.lo, window.hi))
    if min(shape) < 1:
        raise ValueError("empty window")
    return PotentialField(window, dist.draw(rng_for(dist.seed, stream), shape))


def window_for(*cubes, pad=0):
    """Smallest box covering every single-particle projection of ``cubes``."""
    box = cubes[0].hull(pad)
    for c in cubes[1:]:
        box = box.hull(c.hull(pad))
    return box


class CubeOperator:
    """Disorder-independent part of ``H_Lambda`` for a fixed cube.

    Monte Carlo loops build this once and add the sampled potential per
    realisation through :meth:`matrix`.
    """

    def __init__(self, cube, params):
        if (cube.n, cube.d) != (params.n, params.d):
            raise ValueError("cube shape does not match model (n, d)")
        self.cube = cube
        self.params = params
        self.sites = geometry.sites(cube)
        self.kinetic = kinetic_matrix(cube, params)
        self.interaction = _interaction_diagonal(self.sites, params.interaction_kernel())
        # T + U, the part scaled by 1/g
        self.hopping_part = self.kinetic.copy()
        self.hopping_part[np.diag_indices_from(self.hopping_part)] += self.interaction
        self.base = self.hopping_part / params.g

    def potential_diagonal(self, potential):
        if not potential.covers(self.cube):
            raise WindowTooSmall("potential window does not cover the cube")
        return potential.at(self.sites).sum(axis=1)

    def matrix(self, potential):
        h = self.base.copy()
        h[np.diag_indices_from(h)] += self.potential_diagonal(potential)
        return h


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    cube: Cube
    matrix: np.ndarray
    params: ModelParams
    potential: PotentialField

    @property
    def sites(self):
        return geometry.sites(self.cube)

    @property
    def size(self):
        return self.matrix.shape[0]

    def restrict(self, sub_cube):
        """Dirichlet restriction to ``sub_cube`` (a sub-block of the matrix)."""
        if not self.cube.contains_cube(sub_cube):
            raise ValueError("sub_cube is not contained in the cube")
        idx = self.cube.index_of(geometry.sites(sub_cube))
        return HamiltonianMatrix(sub_cube, self.matrix[np.ix_(idx, idx)], self.params, self.potential)


def assemble(cube, params, potential):
    """Assemble ``H_Lambda = g^-1 (T + U) + V`` on ``cube``.

    Raises
    ------
    WindowTooSmall
        If ``potential`` does not cover every single-particle projection.
    """
    if not potential.covers(cube):
        raise WindowTooSmall("potential window does not cover the cube")
    h = CubeOperator(cube, params).matrix(potential)
    # mirror the upper triangle so symmetry is exact
    h = np.triu(h) + np.triu(h, 1).T
    return HamiltonianMatrix(cube, h, params, potential)
