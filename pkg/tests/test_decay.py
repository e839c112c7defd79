import numpy as np
import pytest
from hypothesis import given, strategies as st

from mploc import decay, model, spectral
from mploc.errors import (CubeNotInterior, InsufficientShells, SingularEnergy, ZeroAtOrigin,
                          ZeroVector)
from mploc.geometry import Cube
from mploc.model import DisorderSpec, ModelParams


def line(L):
    return spectral.cube_coords(Cube([0], L))


def test_localization_center_examples():
    co = line(10)
    v = np.zeros(len(co))
    v[13] = 1.0
    assert decay.localization_center(v, co).tolist() == [3]
    v[4] = -1.0
    assert decay.localization_center(v, co).tolist() == [-6]
    # <x - 7> = max(1, |x - 7|) ties at 6, 7, 8; the first site wins
    prof = np.maximum(np.abs(co[:, 0] - 7), 1.0) ** -4.0
    assert decay.localization_center(prof, co).tolist() == [6]
    prof = (1.0 + np.abs(co[:, 0] - 7)) ** -4.0
    assert decay.localization_center(prof, co).tolist() == [7]
    with pytest.raises(ZeroVector):
        decay.localization_center(np.zeros(len(co)), co)


# keep the envelope above the floor on most of the annulus
@given(st.floats(0.5, 8.0), st.integers(1, 2))
def test_exact_power_law_recovered(alpha, d):
    co = spectral.cube_coords(Cube([0] * d, 30 if d == 1 else 12, d=d))
    v = np.maximum(np.max(np.abs(co), axis=1), 1.0) ** -alpha
    fit = decay.fit_power_exponent(v, co, np.zeros(d, int))
    assert fit.exponent == pytest.approx(alpha, rel=0.01)


def test_oscillating_profile_and_delta():
    co = line(40)
    k = np.maximum(np.abs(co[:, 0]), 1.0)
    v = k**-5.0 * (1 + 0.1 * np.cos(co[:, 0]))
    assert decay.fit_power_exponent(v, co, [0]).exponent == pytest.approx(5, abs=0.1)
    delta = (co[:, 0] == 0).astype(float)
    fit = decay.fit_power_exponent(delta, co, [0])
    assert fit.capped and fit.exponent == decay.EXP_CAP


def test_insufficient_shells():
    co = line(3)
    with pytest.raises(InsufficientShells):
        decay.fit_power_exponent(np.ones(len(co)), co, [0])


def test_decay_table_csv():
    cube = Cube([0], 20)
    p = ModelParams(g=30.0, r=6.0)
    H = model.assemble(cube, p, model.sample_potential(model.window_for(cube), DisorderSpec(seed=1)))
    rows = decay.decay_table(H)
    assert rows and all(f.boundary_margin >= 4 for f in rows)
    text = decay.decay_csv(rows)
    assert text.splitlines()[0] == "eigen_index,E,center,exponent,r2,margin"
    assert len(text.splitlines()) == len(rows) + 1


def _instance(g=5.0, r=6.0, L=30, seed=3):
    cube = Cube([0], L)
    p = ModelParams(g=g, r=r)
    H = model.assemble(cube, p, model.sample_potential(model.window_for(cube), DisorderSpec(seed=seed)))
    return H, spectral.eigenpairs(H)


def test_poisson_single_site_is_exact():
    H, sp = _instance(L=10)
    for j in range(0, 21, 5):
        chk = decay.poisson_residual(H, (sp.eigenvalues[j], sp.eigenvectors[:, j]), Cube([2], 0))
        assert chk.max_abs_residual <= 1e-12


def test_poisson_localized_eigenpairs():
    H, sp = _instance()
    co = spectral.cube_coords(H.cube)
    done = 0
    for j in range(len(sp.eigenvalues)):
        c = decay.localization_center(sp.eigenvectors[:, j], co)
        if abs(c[0]) > 24:
            continue
        chk = decay.poisson_residual(H, (sp.eigenvalues[j], sp.eigenvectors[:, j]), Cube(c, 5))
        assert chk.ok
        done += 1
    assert done > 10


def test_poisson_negative_control():
    H, sp = _instance()
    rng = np.random.default_rng(0)
    v = rng.normal(size=H.size)
    v /= np.linalg.norm(v)
    chk = decay.poisson_residual(H, (0.3, v), Cube([0], 5))
    assert chk.max_abs_residual > 1e-2
    assert not chk.ok or chk.truncation_bound > chk.max_abs_residual


def test_poisson_guards():
    H, sp = _instance(L=10)
    with pytest.raises(CubeNotInterior):
        decay.poisson_residual(H, (0.0, sp.eigenvectors[:, 0]), Cube([6], 4))
    sub = Cube([0], 0)
    E = H.matrix[10, 10]
    with pytest.raises(SingularEnergy):
        decay.poisson_residual(H, (E, sp.eigenvectors[:, 0]), sub)


def test_growth_check_examples():
    co = line(10)
    assert decay.generalized_growth_check(np.ones(len(co)), co, 0.51) == (1.0, True)
    delta = (co[:, 0] == 0).astype(float)
    assert decay.generalized_growth_check(delta, co, 0.51) == (1.0, True)
    k = np.abs(co[:, 0])
    C, ok = decay.generalized_growth_check((1.0 + k) ** 2, co, 1.01)
    assert ok and C == pytest.approx(np.max((1.0 + k) ** 2 / (1.0 + k) ** 1.01))
    with pytest.raises(ZeroAtOrigin):
        decay.generalized_growth_check(1.0 - delta, co, 0.6)
