import numpy as np
import pytest
from hypothesis import given, strategies as st

from mploc import model, spectral, stochastics
from mploc.errors import BudgetExceeded, NotSeparable, NotWeaklySeparable, ScheduleViolation
from mploc.geometry import Cube
from mploc.model import DisorderSpec, ModelParams
from mploc.schedule import derive_schedule, toy_schedule

Z95 = 1.6448536269514722


def wilson_oracle(k, n, z=Z95):
    p = k / n
    centre = p + z * z / (2 * n)
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return (centre + half) / (1 + z * z / n)


@given(st.integers(1, 5000), st.data())
def test_wilson_upper_matches_closed_form(n, data):
    k = data.draw(st.integers(0, n))
    w = stochastics.wilson_upper(k, n)
    assert w == pytest.approx(wilson_oracle(k, n), rel=1e-9, abs=1e-12)
    assert w >= k / n


def test_gamma_examples():
    assert stochastics.gamma_initial(2, 1, 1, 1, 1, 3) == pytest.approx(1 / (4 * 2 * 243 * 2187))
    assert stochastics.gamma_initial(2, 1, 1e6, 1, 1, 3) == pytest.approx(0.25, rel=1e-4)
    ratio = stochastics.gamma_initial(2, 1, 1, 1, 1, 6) / stochastics.gamma_initial(2, 1, 1, 1, 1, 3)
    assert ratio == pytest.approx(2.0**-7)


def test_bound_formulas():
    cube = Cube([0, 0], 1)
    assert stochastics.single_volume_bound(cube, DisorderSpec(), 0.001) == pytest.approx(0.054)
    assert stochastics.two_volume_bound(cube, DisorderSpec(), 0.001) == pytest.approx(0.486)
    assert stochastics.single_volume_bound(cube, DisorderSpec(), 5.0) == 1.0


PARAMS = ModelParams(n=1, d=1, g=4.0, r=3.0)


def test_single_volume_invariants_and_extremes():
    cube = Cube([0], 1)
    res = stochastics.mc_single_volume_stollmann(cube, PARAMS, 0.0, [0.0, 0.05, 100.0], 400, 3)
    assert res.event_counts[0] == 0 and res.passed[0]
    assert res.event_counts[2] == 400 and res.theory_bound[2] == 1.0
    assert res.empirical_p == [c / 400 for c in res.event_counts]
    assert all(w >= p for w, p in zip(res.wilson_upper_95, res.empirical_p))
    assert np.all(np.diff(res.event_counts) >= 0)


def test_single_volume_matches_direct_loop():
    cube = Cube([0], 2)
    eps = [0.01, 0.1]
    res = stochastics.mc_single_volume_stollmann(cube, PARAMS, 0.2, eps, 150, 8, chunk=40)
    counts = np.zeros(2, int)
    dist = DisorderSpec(seed=8)
    for i in range(150):
        pot = model.sample_potential(model.window_for(cube), dist, stream=i)
        w = np.linalg.eigvalsh(model.assemble(cube, PARAMS, pot).matrix)
        counts += np.min(np.abs(w - 0.2)) <= np.array(eps)
    assert res.event_counts == counts.tolist()


def test_chunking_does_not_change_counts():
    cube = Cube([0], 1)
    a = stochastics.mc_single_volume_stollmann(cube, PARAMS, 0.0, [0.01, 0.1], 300, 5, chunk=7)
    b = stochastics.mc_single_volume_stollmann(cube, PARAMS, 0.0, [0.01, 0.1], 300, 5, chunk=300)
    assert a.event_counts == b.event_counts and a.to_csv() == b.to_csv()


def test_two_volume_guard():
    a = Cube([0, 0], 1)
    with pytest.raises(NotWeaklySeparable):
        stochastics.mc_two_volume_stollmann(a, a, ModelParams(n=2, g=4.0, r=3.0), [0.1], 100)


def test_two_volume_independent_oracle():
    """Disjoint windows: shared-field sampling equals two independent spectra."""
    a, b = Cube([0], 1), Cube([20], 1)
    eps = [0.02, 0.2]
    N = 4000
    res = stochastics.mc_two_volume_stollmann(a, b, PARAMS, eps, N, 17)
    rng = np.random.default_rng(99)
    opa, opb = model.CubeOperator(a, PARAMS), model.CubeOperator(b, PARAMS)
    counts = np.zeros(2)
    for _ in range(N):
        wa = np.linalg.eigvalsh(opa.base + np.diag(rng.uniform(-1, 1, 3)))
        wb = np.linalg.eigvalsh(opb.base + np.diag(rng.uniform(-1, 1, 3)))
        counts += np.min(np.abs(wa[:, None] - wb[None, :])) <= np.array(eps)
    for k in range(2):
        p1, p2 = res.event_counts[k] / N, counts[k] / N
        pool = (p1 + p2) / 2
        assert abs(p1 - p2) <= 4 * np.sqrt(pool * (1 - pool) * 2 / N) + 1e-9
    assert res.all_passed


def test_good_probe_diagonal_limit():
    sched = toy_schedule(1, 1, beta=1.0, tau=12.0, L0=4)
    cube = Cube([0], 4)
    params = ModelParams(n=1, d=1, g=1e15, r=30.0)
    C0 = spectral.default_c0(sched.level(1).s0, 1)
    pot = model.sample_potential(model.window_for(cube), DisorderSpec(seed=0), stream=0)
    H = model.assemble(cube, params, pot).matrix
    G = spectral.green(H, 0.0)
    expected = np.sqrt(C0) / np.min(np.abs(pot.values))
    assert spectral.sobolev_norm(G, 0.6, 0.6, C0) == pytest.approx(expected, rel=1e-9)


def test_good_probe_vacuous_when_gamma_large():
    sched = toy_schedule(1, 1, beta=1.0, tau=12.0, L0=4)
    cert = stochastics.good_implies_ns_probe(Cube([0], 4), ModelParams(g=10.0, r=30.0), 0.0,
                                             sched, 50, gamma=3.5)
    assert cert.good == 0 and cert.violations == [] and cert.not_good == 50


def test_good_probe_large_coupling():
    sched = toy_schedule(1, 1, beta=1.0, tau=12.0, L0=4)
    gamma = stochastics.gamma_initial(1, 1, 1, 1, 1, 4)
    cert = stochastics.good_implies_ns_probe(Cube([0], 4), ModelParams(g=1e4, r=30.0), 0.0,
                                             sched, 500, gamma, master_seed=4)
    assert cert.violations == []
    assert cert.good + cert.not_good == 500


def test_joint_guard_and_strong_disorder():
    sched = toy_schedule(1, 1, beta=1.0, tau=12.0, L0=4)
    with pytest.raises(NotSeparable):
        stochastics.mc_joint_singularity(Cube([0], 4), Cube([10], 4), PARAMS, sched, 10)
    res = stochastics.mc_joint_singularity(Cube([0], 4), Cube([60], 4),
                                           ModelParams(g=1e4, r=30.0), sched, 60, 1)
    assert res.event_counts == [0]
    assert res.theory_bound == [4.0**-2]


def test_joint_strict_schedule_unfalsifiable():
    S = derive_schedule(2, 1, 1.0, 40, L0=3)
    params = ModelParams(n=2, d=1, g=10.0, r=6.0)
    res = stochastics.mc_joint_singularity(Cube([0, 0], 3), Cube([100, 100], 3), params, S, 2,
                                           E_grid=[0.0])
    assert res.theory_bound[0] == pytest.approx(3.0**-80)
    assert res.notes["unfalsifiable"]


def test_energy_grid_step():
    sched = toy_schedule(1, 1, beta=1.0, L0=4)
    grid = stochastics.energy_grid(sched, 4)
    assert grid[0] == -2.0 and np.allclose(np.diff(grid), 0.25)
    with pytest.raises(BudgetExceeded):
        stochastics.energy_grid(derive_schedule(1, 1, 1.0, 20), 3, max_points=1000)


def test_coupling_probe_guards(monkeypatch):
    bad = toy_schedule(1, 1, beta=1.0).with_level(1, r=5.0)
    with pytest.raises(ScheduleViolation) as info:
        stochastics.coupling_probe(2, PARAMS, bad, 2)
    assert any(c.id.startswith("coupling") for c in info.value.violations)
    with pytest.raises(BudgetExceeded):
        stochastics.coupling_probe(3, ModelParams(n=2, g=4.0, r=3.0),
                                   toy_schedule(2, 1, beta=1.0), 1)


def test_coupling_probe_records():
    sched = toy_schedule(1, 1, beta=1.0, L0=2)
    rep = stochastics.coupling_probe(2, ModelParams(g=1e6, r=30.0), sched, 6, E=1.05,
                                     master_seed=2)
    assert rep.L == 16 and rep.samples == 6
    for r in rep.records:
        assert r["hypotheses"] == (r["bounds_ok"] and r["big_nonresonant"])
    # strong coupling, energy off the potential range: nothing singular anywhere
    assert all(r["bad_centers"] == 0 for r in rep.records)
    assert rep.implication_rate == 1.0
