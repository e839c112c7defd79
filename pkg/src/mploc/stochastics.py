"""Seeded Monte Carlo ensembles for the probabilistic estimates at small scales.

Every sample ``i`` draws its potential from the stream ``(master_seed, i)``,
so an ensemble is reproducible bit for bit and independent of how samples
are batched or distributed over workers.  Event counts are integers and
merge by addition; floating results are merged in sample order.
"""

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from . import geometry
from .errors import (BudgetExceeded, NotSeparable, NotWeaklySeparable,
                     ScheduleViolation)
from .geometry import Cube, cluster_singular_centers
from .model import CubeOperator, holder_modulus, sample_potential, window_for
from .schedule import validate
from .spectral import (OffsetProfile, classify, cube_coords, default_c0,
                       is_nonsingular)

WILSON_CONFIDENCE = 0.95
UNFALSIFIABLE_BELOW = 1e-30


def content_hash(obj):
    """Short sha256 of the canonical JSON form of ``obj``."""
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def wilson_upper(count, samples, confidence=WILSON_CONFIDENCE):
    """One-sided Wilson score upper bound for a binomial proportion."""
    if samples == 0:
        return 1.0
    ci = binomtest(int(count), int(samples)).proportion_ci(
        confidence_level=2 * confidence - 1, method="wilson")
    return float(ci.high)


@dataclass
class EnsembleResult:
    """Event frequencies per threshold, with theory bounds and Wilson envelopes.

    ``passed[k]`` is ``wilson_upper_95[k] <= theory_bound[k]``, except that a
    threshold whose bound is exactly 0 (a null event such as ``eps = 0``)
    passes iff no event was seen.
    """

    thresholds: list
    samples: int
    event_counts: list
    theory_bound: list
    master_seed: int
    params_hash: str
    truncated: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def empirical_p(self):
        return [c / self.samples if self.samples else 0.0 for c in self.event_counts]

    @property
    def wilson_upper_95(self):
        return [wilson_upper(c, self.samples) for c in self.event_counts]

    @property
    def passed(self):
        out = []
        for c, w, b in zip(self.event_counts, self.wilson_upper_95, self.theory_bound):
            out.append(bool(c == 0) if b == 0 else bool(w <= b))
        return out

    @property
    def all_passed(self):
        return all(self.passed)

    def to_dict(self):
        return {
            "thresholds": list(self.thresholds),
            "samples": self.samples,
            "event_counts": list(self.event_counts),
            "empirical_p": self.empirical_p,
            "theory_bound": list(self.theory_bound),
            "wilson_upper_95": self.wilson_upper_95,
            "passed": self.passed,
            "master_seed": self.master_seed,
            "params_hash": self.params_hash,
            "truncated": self.truncated,
            "notes": self.notes,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_rows(self):
        return [(t, c, p, w, b, ok) for t, c, p, w, b, ok in zip(
            self.thresholds, self.event_counts, self.empirical_p,
            self.wilson_upper_95, self.theory_bound, self.passed)]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps_or_E", "count", "empirical_p", "wilson_upper", "theory_bound", "pass"])
        for row in self.csv_rows():
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
        return buf.getvalue()


def _chunks(samples, size):
    return [(a, min(a + size, samples)) for a in range(0, samples, size)]


def run_chunks(fn, args, samples, chunk=250, parallelism=1):
    """Evaluate ``fn(*args, start, stop)`` over sample chunks in order.

    Returns ``(results, truncated)``; on ``KeyboardInterrupt`` the chunks
    completed so far are returned with ``truncated = True``.
    """
    spans = _chunks(samples, chunk)
    out = []
    try:
        if parallelism > 1:
            with ProcessPoolExecutor(max_workers=parallelism) as ex:
                futures = [ex.submit(fn, *args, a, b) for a, b in spans]
                for f in futures:
                    out.append(f.result())
        else:
            for a, b in spans:
                out.append(fn(*args, a, b))
    except KeyboardInterrupt:
        return out, True
    return out, False


def _seeded(params, master_seed):
    return replace(params.disorder, seed=int(master_seed))


def _potentials(window, dist, start, stop):
    for i in range(start, stop):
        yield sample_potential(window, dist, stream=i)


def _spectra(ops, window, dist, start, stop):
    """Eigenvalues of each operator in ``ops`` per sample; one shared field."""
    mats = [[] for _ in ops]
    for pot in _potentials(window, dist, start, stop):
        for k, op in enumerate(ops):
            mats[k].append(op.matrix(pot))
    return [np.linalg.eigvalsh(np.array(m)) for m in mats]


# ---------------------------------------------------------------- Stollmann

def _single_chunk(op, window, dist, E, eps, start, stop):
    (w,) = _spectra([op], window, dist, start, stop)
    gaps = np.min(np.abs(w - E), axis=1)
    return np.sum(gaps[:, None] <= eps[None, :], axis=0)


def single_volume_bound(cube, dist, eps):
    """``n (2L+1)^((n+1)d) * modulus(2 eps)``, capped at 1."""
    pref = cube.n * (2 * cube.radius + 1) ** ((cube.n + 1) * cube.d)
    return min(1.0, pref * holder_modulus(dist, 2 * eps))


def two_volume_bound(cube, dist, eps):
    """``n (2L+1)^((2n+1)d) * modulus(2 eps)``, capped at 1."""
    pref = cube.n * (2 * cube.radius + 1) ** ((2 * cube.n + 1) * cube.d)
    return min(1.0, pref * holder_modulus(dist, 2 * eps))


def mc_single_volume_stollmann(cube, params, E, eps_grid, samples, master_seed=0,
                               parallelism=1, chunk=250):
    """Frequency of ``dist(E, sigma(H_cube)) <= eps`` against the one-volume bound."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    eps = np.asarray(eps_grid, dtype=float)
    dist = _seeded(params, master_seed)
    op = CubeOperator(cube, params)
    window = window_for(cube)
    parts, truncated = run_chunks(_single_chunk, (op, window, dist, float(E), eps),
                                  samples, chunk, parallelism)
    done = sum(min(chunk, samples - i * chunk) for i in range(len(parts)))
    counts = np.sum(parts, axis=0) if parts else np.zeros(len(eps), dtype=int)
    bound = [single_volume_bound(cube, dist, e) for e in eps]
    h = content_hash({"op": "single_volume", "cube": cube.descriptor(),
                      "params": params.to_dict(), "E": float(E)})
    return EnsembleResult([float(e) for e in eps], done, [int(c) for c in counts],
                          bound, int(master_seed), h, truncated)


def _pair_gaps(a, b):
    """Row-wise ``min |a_i - b_j|`` for sorted spectra ``a``, ``b``."""
    out = np.empty(len(a))
    for k in range(len(a)):
        idx = np.searchsorted(b[k], a[k])
        lo = b[k][np.clip(idx - 1, 0, b.shape[1] - 1)]
        hi = b[k][np.clip(idx, 0, b.shape[1] - 1)]
        out[k] = min(np.min(np.abs(a[k] - lo)), np.min(np.abs(a[k] - hi)))
    return out


def _two_chunk(op_a, op_b, window, dist, eps, start, stop):
    wa, wb = _spectra([op_a, op_b], window, dist, start, stop)
    gaps = _pair_gaps(wa, wb)
    return np.sum(gaps[:, None] <= eps[None, :], axis=0)


def mc_two_volume_stollmann(cube_a, cube_b, params, eps_grid, samples, master_seed=0,
                            parallelism=1, chunk=250):
    """Frequency of ``dist(sigma(H_A), sigma(H_B)) <= eps`` against the two-volume bound.

    Both spectra come from one shared potential per sample.

    Raises
    ------
    NotWeaklySeparable
        If the pair admits no weak-separability witness.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    witness = geometry.is_weakly_separable(cube_a, cube_b, params.r0)
    if witness is None:
        raise NotWeaklySeparable("cubes are not weakly separable")
    eps = np.asarray(eps_grid, dtype=float)
    dist = _seeded(params, master_seed)
    ops = (CubeOperator(cube_a, params), CubeOperator(cube_b, params))
    window = window_for(cube_a, cube_b)
    parts, truncated = run_chunks(_two_chunk, (*ops, window, dist, eps),
                                  samples, chunk, parallelism)
    done = sum(min(chunk, samples - i * chunk) for i in range(len(parts)))
    counts = np.sum(parts, axis=0) if parts else np.zeros(len(eps), dtype=int)
    bound = [two_volume_bound(cube_a, dist, e) for e in eps]
    h = content_hash({"op": "two_volume", "a": cube_a.descriptor(), "b": cube_b.descriptor(),
                      "params": params.to_dict()})
    return EnsembleResult([float(e) for e in eps], done, [int(c) for c in counts],
                          bound, int(master_seed), h, truncated,
                          {"witness_side": witness.side, "witness_J": list(witness.J)})


# ---------------------------------------------------------- initial scale

def gamma_initial(n, d, rho, kappa, p, L0):
    """Goodness threshold ``gamma`` at the initial scale ``L0``.

    ``gamma = n^(-1/rho) 3^(-(2n+1)d/rho) kappa^(1/rho) L0^(-(2p+(2n+1)d)/rho) / 4``
    """
    if min(n, d, rho, kappa, p, L0) <= 0:
        raise ValueError("all arguments must be positive")
    k = (2 * n + 1) * d
    return 0.25 * n ** (-1 / rho) * 3.0 ** (-k / rho) * kappa ** (1 / rho) \
        * float(L0) ** (-(2 * p + k) / rho)


def coupling_constant(cube, params, s0=None, C0=None):
    """Measured ``C = ||T + U||_s0 * sqrt(C0)`` on ``cube``.

    A cube whose potential stays ``gamma`` away from ``E`` has
    ``||(V - E)^-1||_s0 <= sqrt(C0) / gamma``, so ``|g| >= 2 C / gamma`` makes
    the hopping a perturbation of relative size at most one half.
    """
    D = cube.n * cube.d
    s0 = D / 2 + 0.1 if s0 is None else s0
    C0 = default_c0(s0, D) if C0 is None else C0
    op = CubeOperator(cube, params)
    coords = cube_coords(cube)
    return OffsetProfile(op.hopping_part, coords, coords).norm(s0, C0) * np.sqrt(C0)


@dataclass
class GoodCubeCertificate:
    gamma: float
    g_star: float
    g: float
    C: float
    samples: int
    good: int
    ns_verified: int
    violations: list
    master_seed: int
    params_hash: str
    truncated: bool = False

    @property
    def precondition_met(self):
        return abs(self.g) >= self.g_star * (1 - 1e-12)

    @property
    def not_good(self):
        return self.samples - self.good

    def to_dict(self):
        out = asdict(self)
        out["precondition_met"] = self.precondition_met
        out["not_good"] = self.not_good
        return out

    def csv_rows(self):
        return [("good->NS verified", self.ns_verified),
                ("good->NS violated", len(self.violations)),
                ("not-good", self.not_good)]


def _good_chunk(op, window, dist, E, gamma, schedule, C0, start, stop):
    good = ns = 0
    bad = []
    for i, pot in enumerate(_potentials(window, dist, start, stop), start):
        v = op.potential_diagonal(pot)
        if np.min(np.abs(v - E)) <= gamma:
            continue
        good += 1
        h = op.base.copy()
        h[np.diag_indices_from(h)] += v
        cls = classify(op.cube, h, E, schedule, C0=C0, diagnostic_points=2)
        if cls.singular:
            bad.append(i)
        else:
            ns += 1
    return good, ns, bad


def good_implies_ns_probe(cube, params, E, schedule, samples, gamma, master_seed=0,
                          C0=None, parallelism=1, chunk=100):
    """Check that every ``(E, gamma)``-good sample of ``cube`` is ``(E, delta)``-NS.

    A sample is good if ``min_x |V(x) - E| > gamma``.  The certificate records
    the measured constant ``C``, the coupling threshold ``g* = 2 C / gamma`` and
    the sample indices of any good but singular realisation.
    """
    level = schedule.level(cube.n)
    C0 = default_c0(level.s0, cube.n * cube.d) if C0 is None else C0
    C = coupling_constant(cube, params, level.s0, C0)
    g_star = 2 * C / gamma
    dist = _seeded(params, master_seed)
    op = CubeOperator(cube, params)
    window = window_for(cube)
    parts, truncated = run_chunks(
        _good_chunk, (op, window, dist, float(E), float(gamma), schedule, C0),
        samples, chunk, parallelism)
    done = sum(min(chunk, samples - i * chunk) for i in range(len(parts)))
    good = sum(p[0] for p in parts)
    ns = sum(p[1] for p in parts)
    bad = [i for p in parts for i in p[2]]
    h = content_hash({"op": "good_ns", "cube": cube.descriptor(), "params": params.to_dict(),
                      "E": float(E), "schedule": schedule.hash(), "gamma": gamma})
    return GoodCubeCertificate(float(gamma), float(g_star), float(params.g), float(C),
                               done, good, ns, bad, int(master_seed), h, truncated)


# ---------------------------------------------------------- joint singularity

def energy_grid(schedule, L, min_step=1e-4, max_points=200_000):
    """Uniform grid over the schedule's interval with step ``max(L^-beta, min_step)``."""
    lo, hi = schedule.interval
    step = max(float(L) ** (-schedule.beta), min_step)
    count = int(np.floor((hi - lo) / step)) + 1
    if count > max_points:
        raise BudgetExceeded(f"energy grid of {count} points exceeds {max_points}")
    return lo + step * np.arange(count)


def _singular_set(w, Q, coords, level, delta, L, C0, energies):
    out = np.zeros(len(energies), dtype=bool)
    for k, E in enumerate(energies):
        d = np.min(np.abs(w - E))
        if d <= 1e-12:
            out[k] = True
            continue
        G = (Q / (w - E)[None, :]) @ Q.T
        out[k] = not is_nonsingular(G, coords, level, delta, L, C0)
    return out


def _joint_chunk(op_a, op_b, window, dist, schedule, grid, C0, start, stop):
    level = schedule.level(op_a.cube.n)
    L = op_a.cube.radius
    ca, cb = cube_coords(op_a.cube), cube_coords(op_b.cube)
    hits = 0
    for pot in _potentials(window, dist, start, stop):
        wa, Qa = np.linalg.eigh(op_a.matrix(pot))
        wb, Qb = np.linalg.eigh(op_b.matrix(pot))
        energies = np.concatenate([grid, wa, wb])
        sa = _singular_set(wa, Qa, ca, level, schedule.delta, L, C0, energies)
        if not sa.any():
            continue
        sb = _singular_set(wb, Qb, cb, level, schedule.delta, L, C0, energies[sa])
        hits += int(sb.any())
    return hits


def mc_joint_singularity(cube_a, cube_b, params, schedule, samples, master_seed=0,
                         E_grid=None, min_step=1e-4, C0=None, parallelism=1, chunk=50):
    """Frequency of ``exists E in I: both cubes (E, delta)-singular`` vs ``L^-2p``.

    ``E`` ranges over ``E_grid`` (default :func:`energy_grid`) plus the
    eigenvalues of both sampled operators.

    Raises
    ------
    NotSeparable
        If the pair is not separable.
    """
    if not geometry.is_separable(cube_a, cube_b, params.r0):
        raise NotSeparable("cubes are not separable")
    L = cube_a.radius
    level = schedule.level(cube_a.n)
    grid = energy_grid(schedule, L, min_step) if E_grid is None else np.asarray(E_grid, float)
    C0 = default_c0(level.s0, cube_a.n * cube_a.d) if C0 is None else C0
    bound = float(L) ** (-2 * level.p)
    dist = _seeded(params, master_seed)
    ops = (CubeOperator(cube_a, params), CubeOperator(cube_b, params))
    window = window_for(cube_a, cube_b)
    parts, truncated = run_chunks(_joint_chunk, (*ops, window, dist, schedule, grid, C0),
                                  samples, chunk, parallelism)
    done = sum(min(chunk, samples - i * chunk) for i in range(len(parts)))
    h = content_hash({"op": "joint", "a": cube_a.descriptor(), "b": cube_b.descriptor(),
                      "params": params.to_dict(), "schedule": schedule.hash()})
    notes = {"grid_points": int(len(grid)), "schedule_mode": schedule.mode,
             "unfalsifiable": bool(bound < UNFALSIFIABLE_BELOW)}
    return EnsembleResult(["exists"], done, [int(sum(parts))], [bound],
                          int(master_seed), h, truncated, notes)


# ---------------------------------------------------------- coupling lemma

COUPLING_IDS = ("coupling (i)", "coupling (ii)", "coupling (iii)")


@dataclass
class CouplingReport:
    l: int
    L: int
    E: float
    samples: int
    hypotheses_held: int
    implication_held: int
    records: list
    master_seed: int
    params_hash: str
    truncated: bool = False

    @property
    def implication_rate(self):
        return self.implication_held / self.hypotheses_held if self.hypotheses_held else None

    def to_dict(self):
        out = asdict(self)
        out["implication_rate"] = self.implication_rate
        return out

    def csv_rows(self):
        return [(r["sample"], r["bad_centers"], r["clusters"], r["bounds_ok"],
                 r["big_nonresonant"], r["hypotheses"], r["big_ns"]) for r in self.records]


def _coupling_chunk(big_op, sub_cubes, l, E, schedule, C0_small, C0_big, window, dist,
                    start, stop):
    big = big_op.cube
    level = schedule.level(big.n)
    D = big.n * big.d
    big_coords = cube_coords(big)
    sub_idx = [big.index_of(geometry.sites(c)) for c in sub_cubes]
    sub_coords = [cube_coords(c) for c in sub_cubes]
    records = []
    for i, pot in enumerate(_potentials(window, dist, start, stop), start):
        h = big_op.matrix(pot)
        bad = []
        for c, idx, coords in zip(sub_cubes, sub_idx, sub_coords):
            w, Q = np.linalg.eigh(h[np.ix_(idx, idx)])
            if np.min(np.abs(w - E)) <= 1e-12 or not is_nonsingular(
                    (Q / (w - E)[None, :]) @ Q.T, coords, level, schedule.delta, l, C0_small):
                bad.append(c.u.reshape(-1))
        dec = cluster_singular_centers(np.array(bad).reshape(-1, D), l,
                                       cover_radius=l - 1, c_tilde=(l - 1) / l)
        bounds_ok = dec.satisfies_bounds()
        w, Q = np.linalg.eigh(h)
        gap = np.min(np.abs(w - E))
        nonres = bool(gap >= float(big.radius) ** (-schedule.beta))
        hyp = bounds_ok and nonres
        ns = bool(gap > 1e-12 and is_nonsingular((Q / (w - E)[None, :]) @ Q.T, big_coords,
                                                 level, schedule.delta, big.radius, C0_big))
        records.append({"sample": i, "bad_centers": len(bad), "clusters": len(dec.clusters),
                        "bounds_ok": bool(bounds_ok), "big_nonresonant": nonres,
                        "hypotheses": bool(hyp), "big_ns": ns})
    return records


def coupling_probe(l, params, schedule, samples, E=0.0, master_seed=0, center=None,
                   parallelism=1, chunk=25):
    """Empirical check of the coupling step from scale ``l`` to ``L = l^4``.

    Sub-cubes of radius ``l - 1`` around every admissible centre are classified
    at scale ``l``; the singular ones are clustered with chain length ``2 l^2``.
    Whenever the cluster bounds hold and the big cube is non-resonant, the
    big cube's ``(E, delta)``-non-singularity is recorded.

    Raises
    ------
    ScheduleViolation
        If the schedule breaks one of the coupling inequalities.
    BudgetExceeded
        If the big cube exceeds the matrix-size budget.
    """
    fails = [c for c in validate(schedule, strict=False) if c.id.startswith(COUPLING_IDS)]
    if fails:
        raise ScheduleViolation("schedule violates the coupling conditions", fails)
    if l < 2:
        raise ValueError("need l >= 2")
    L = l**4
    n, d = params.n, params.d
    if (2 * L + 1) ** (n * d) > geometry.max_dim():
        raise BudgetExceeded(f"(2L+1)^(nd) = {(2 * L + 1) ** (n * d)} exceeds {geometry.max_dim()}")
    center = np.zeros((n, d), dtype=int) if center is None else geometry.as_point(center, d)
    big = Cube(center, L)
    rad = l - 1
    offsets = geometry.sites(Cube(np.zeros((n, d), dtype=int), L - rad))
    sub_cubes = [Cube(center + off, rad) for off in offsets]
    level = schedule.level(n)
    C0 = default_c0(level.s0, n * d)
    dist = _seeded(params, master_seed)
    window = window_for(big)
    parts, truncated = run_chunks(
        _coupling_chunk, (CubeOperator(big, params), sub_cubes, l, float(E), schedule,
                          C0, C0, window, dist), samples, chunk, parallelism)
    records = [r for p in parts for r in p]
    hyp = sum(r["hypotheses"] for r in records)
    imp = sum(r["hypotheses"] and r["big_ns"] for r in records)
    h = content_hash({"op": "coupling", "l": l, "params": params.to_dict(),
                      "schedule": schedule.hash(), "E": float(E)})
    return CouplingReport(l, L, float(E), len(records), hyp, imp, records,
                          int(master_seed), h, truncated)
