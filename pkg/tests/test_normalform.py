"""Normal-form steps, remainder scaling, frame rotation, homogenization."""
from fractions import Fraction

import numpy as np
import pytest

from matherlab.flow import SeriesField, integrate
from matherlab.models import three_mode_system
from matherlab.normalform import (
    averaged_potential,
    compose_transform,
    homogenize,
    kam_step,
    nonresonant_drop,
    normal_form,
    rotate_resonant_frame,
    verify_remainder,
)
from matherlab.resonance import resonant_project, unimodular_complete
from matherlab.series import FourierTaylorSeries, NearIntegrableSystem, cnorm, evaluate

OMEGA = (0, 1)
T_PERIOD = 1.0


def quadratic_h(n=2):
    return FourierTaylorSeries.quadratic_action(n, np.eye(n))


# -- kam_step ------------------------------------------------------------------

def test_resonant_input_gives_zero_W():
    h = quadratic_h()
    Z0 = FourierTaylorSeries.zero(2, 2)
    P = FourierTaylorSeries.cosine(2, 2, (1, 0))  # resonant wrt (0,1)
    step = kam_step(h, Z0, P, OMEGA, j=0)
    assert len(step["W"]) == 0
    assert len(step["R_next_1"]) == 0
    assert step["Z_add"].coeffs == P.coeffs


def test_resonant_modes_rejected_at_later_steps():
    h = quadratic_h()
    Z0 = FourierTaylorSeries.zero(2, 2)
    P = FourierTaylorSeries.cosine(2, 2, (1, 0))
    with pytest.raises(ValueError):
        kam_step(h, Z0, P, OMEGA, j=1)


def test_one_mode_generator_matches_quadrature():
    # W0 for P = cos(x2), omega = (0,1): closed form -sin(x2); also equal to
    # the averaging integral -(1/T) int_0^T P(x + omega s) s ds with T = 2*pi
    h = quadratic_h()
    Z0 = FourierTaylorSeries.zero(2, 2)
    P = FourierTaylorSeries.cosine(2, 2, (0, 1))
    step = kam_step(h, Z0, P, OMEGA, j=0)
    W = step["W"]
    rng = np.random.default_rng(0)
    T = 2 * np.pi
    ss = (np.arange(4096) + 0.5) / 4096 * T
    for _ in range(5):
        x = rng.uniform(0, 2 * np.pi, 2)
        y = rng.uniform(-0.3, 0.3, 2)
        integral = -np.mean([P(x + np.array(OMEGA) * s, y) * s for s in ss]) * T / T
        # -(1/T) * int P(x+omega s) s ds  = -(mean of P*s)
        assert evaluate(W, x, y) == pytest.approx(-np.sin(x[1]), abs=1e-12)
        assert evaluate(W, x, y) == pytest.approx(integral, abs=1e-3)


def test_first_remainder_has_zero_average():
    sys2 = three_mode_system(1e-3)
    step = kam_step(sys2.h, FourierTaylorSeries.zero(2, 2),
                    resonant_project(1e-3 * sys2.P, OMEGA) * 0.0
                    + (1e-3 * sys2.P - resonant_project(1e-3 * sys2.P, OMEGA)),
                    OMEGA, j=1)
    R1 = step["R_next_1"]
    avg = resonant_project(R1, OMEGA)
    assert len(avg) == 0


# -- normal_form ---------------------------------------------------------------

def test_normal_form_eps_zero_trivial():
    sys0 = three_mode_system(0.0)
    nf = normal_form(sys0, [0.0, 1.0], OMEGA, T_PERIOD)
    assert len(nf.Z) == 0 and len(nf.R_r) == 0 and len(nf.W) == 0
    z = np.array([0.3, 0.4, 0.1, 0.9])
    assert np.allclose(compose_transform(nf.W, z), z)


def test_nonresonant_content_drops_10x():
    sys3 = three_mode_system(1e-3)
    rep = nonresonant_drop(sys3, [0.0, 1.0], OMEGA, T_PERIOD, steps=1)
    assert rep["drop"] >= 10.0


def test_composition_and_symplecticity():
    sys3 = three_mode_system(1e-3)
    nf = normal_form(sys3, [0.0, 1.0], OMEGA, T_PERIOD, n_verify=100)
    v = nf.verification
    assert v["composition_defect"] <= v["composition_budget"]
    assert v["symplectic_defect"] <= 1e-7


def test_remainder_exponents():
    sys3 = three_mode_system(1e-3)
    nf = normal_form(sys3, [0.0, 1.0], OMEGA, T_PERIOD)
    rep = verify_remainder(nf, eps_values=[1e-3, 1e-4, 1e-5, 1e-6])
    assert rep["pass"], rep["exponents"]
    assert rep["exponents"]["Rr_C2"]["measured"] >= 4.0 / 3.0
    # sigma = 1/7 bookkeeping: 3*sigma - 2*rho = 1/21
    sigma = rep["sigma"]
    rho = rep["rho"]
    assert 3 * sigma - 2 * rho == pytest.approx(1.0 / 21.0)


def test_integrable_perturbation_zero_remainder():
    # P independent of x: everything resonant, R = 0, exponent +inf
    h = quadratic_h()
    P = FourierTaylorSeries.monomial(2, 2, (2, 0))
    sysI = NearIntegrableSystem(h, P, 1e-3, m=0.5, M=1.5, R=1.0)
    nf = normal_form(sysI, [0.0, 1.0], OMEGA, T_PERIOD)
    assert len(nf.R_r) == 0 and len(nf.R_h) == 0
    rep = verify_remainder(nf, eps_values=[1e-3, 1e-4, 1e-5, 1e-6])
    assert rep["pass"]
    assert rep["exponents"]["Rr_C2"]["measured"] == np.inf


# -- frame rotation --------------------------------------------------------------

def test_rotate_identity_frame():
    sys3 = three_mode_system(1e-2)
    H = sys3.full_series()
    fr = unimodular_complete([1, 0])
    assert np.array_equal(fr.matrix(), np.eye(2, dtype=int))
    H2 = rotate_resonant_frame(H, fr)
    for key in set(H.coeffs) | set(H2.coeffs):
        assert H2.coeffs.get(key, 0j) == pytest.approx(H.coeffs.get(key, 0j))


def test_rotated_resonant_series_drops_last_angle():
    # omega = (1,1), resonant modes are multiples of k = (1,-1)
    Z = (FourierTaylorSeries.cosine(2, 2, (1, -1))
         + 0.5 * FourierTaylorSeries.cosine(2, 2, (2, -2)))
    fr = unimodular_complete([1, -1])
    Zr = rotate_resonant_frame(Z, fr)
    assert all(k[-1] == 0 for k, _ in Zr.coeffs)


def test_double_rotation_restores():
    rng = np.random.default_rng(5)
    s = FourierTaylorSeries.zero(2, 2)
    for _ in range(4):
        k = rng.integers(-2, 3, 2)
        i = rng.integers(0, 2, 2)
        s = s + rng.normal() * (FourierTaylorSeries.cosine(2, 2, k)
                                * FourierTaylorSeries.monomial(2, 2, i))
    fr = unimodular_complete([2, 3])
    back = rotate_resonant_frame(rotate_resonant_frame(s, fr), fr.inverse())
    for key in set(s.coeffs) | set(back.coeffs):
        assert back.coeffs.get(key, 0j) == pytest.approx(s.coeffs.get(key, 0j), abs=1e-12)


def test_project_commutes_with_rotation():
    rng = np.random.default_rng(6)
    P = FourierTaylorSeries.zero(2, 2)
    for _ in range(6):
        k = rng.integers(-2, 3, 2)
        P = P + rng.normal() * FourierTaylorSeries.cosine(2, 2, k)
    omega = (Fraction(1), Fraction(1))
    fr = unimodular_complete([1, -1])
    lhs = rotate_resonant_frame(resonant_project(P, omega), fr)
    # rotated frequency: omega_tilde = I^t omega
    It = fr.matrix().T
    om_t = [sum(Fraction(It[r, c]) * omega[c] for c in range(2)) for r in range(2)]
    rhs = resonant_project(rotate_resonant_frame(P, fr), om_t)
    for key in set(lhs.coeffs) | set(rhs.coeffs):
        assert lhs.coeffs.get(key, 0j) == pytest.approx(rhs.coeffs.get(key, 0j), abs=1e-14)


# -- homogenization ---------------------------------------------------------------

def double_resonance_nf(eps):
    """Normal form at the exact double resonance omega = (0, 0): everything
    is resonant and Z = eps * P."""
    h = quadratic_h()
    P = (FourierTaylorSeries.cosine(2, 2, (1, 0))
         + FourierTaylorSeries.constant(2, 2, -1.0)
         + 2.0 * (FourierTaylorSeries.cosine(2, 2, (0, 1))
                  + FourierTaylorSeries.constant(2, 2, -1.0)))
    sysD = NearIntegrableSystem(h, P, eps, m=0.5, M=1.5, R=1.0)
    return normal_form(sysD, [0.0, 0.0], (0, 0), 1.0)


def test_homogenize_double_resonance():
    eps = 1e-3
    hz = homogenize(double_resonance_nf(eps))
    assert np.allclose(hz.A, np.eye(2))
    assert np.allclose(hz.omega_j, 0.0)           # drift absent
    assert np.allclose(hz.drift, 0.0)
    # V = P(x, 0): check the cosine amplitudes survived the eps normalization
    assert hz.V.coefficient((1, 0), (0, 0)) == pytest.approx(0.5)
    assert hz.V.coefficient((0, 1), (0, 0)) == pytest.approx(1.0)
    assert hz.norms["Z_eps_C0"] <= np.sqrt(eps)


def test_homogenized_orbit_matches_parent():
    # Prop: (x(tau), y(tau)) = (x_eps(s/sqrt(eps)), y_j + sqrt(eps) p(...))
    eps = 1e-3
    nf = double_resonance_nf(eps)
    hz = homogenize(nf)
    rt = np.sqrt(eps)
    parent = SeriesField(nf.system.h + eps * nf.system.P)
    fld = hz.perturbed_field()
    x0 = np.array([1.2, 0.7])
    p0 = np.array([0.4, -0.2])
    z0_h = np.concatenate([x0, p0])
    z0_p = np.concatenate([x0, rt * p0])
    Es = fld.energy(z0_h)
    Ep = parent.energy(z0_p)
    assert Ep == pytest.approx(eps * Es, abs=1e-14)
    s_final = 2.0
    th = integrate(fld, z0_h, (0, s_final), tol=1e-12)
    tp = integrate(parent, z0_p, (0, s_final / rt), tol=1e-12)
    for s in np.linspace(0.2, s_final, 6):
        zh = th.z(s)
        zp = tp.z(s / rt)
        assert np.allclose(zp[:2], zh[:2], atol=1e-6)
        assert np.allclose(zp[2:], rt * zh[2:], atol=1e-6 * rt)


# -- averaged potential -------------------------------------------------------------

def test_average_resonant_cosine_kept():
    V = FourierTaylorSeries.cosine(2, 2, (1, 0))
    out = averaged_potential(V, (0, 1))
    f = out["average"]
    ss = np.linspace(0, 2 * np.pi, 32)
    k0 = np.asarray(f.k0)
    assert abs(k0[0]) == 1 and k0[1] == 0
    for s in ss:
        assert f(s) == pytest.approx(np.cos(s) if k0[0] == 1 else np.cos(-s), abs=1e-12)
    assert out["nondegenerate"]


def test_average_diagonal_flow():
    V = FourierTaylorSeries.cosine(2, 2, (1, 1))
    out = averaged_potential(V, (1, -1))
    f = out["average"]
    # [V] is a one-variable cosine along k0 = +-(1,1); quadrature oracle
    rng = np.random.default_rng(1)
    T = 2 * np.pi
    ts = (np.arange(2048) + 0.5) / 2048 * T
    x0 = rng.uniform(0, 2 * np.pi, 2)
    quad = np.mean([np.cos((x0[0] + t) + (x0[1] - t)) for t in ts])
    s0 = np.asarray(f.k0) @ x0
    assert f(s0) == pytest.approx(quad, abs=1e-10)


def test_average_nonresonant_mode_vanishes():
    V = FourierTaylorSeries.cosine(2, 2, (1, 0))
    out = averaged_potential(V, (1, 1))
    assert len(out["average"].coeffs) == 0
    assert not out["nondegenerate"]
