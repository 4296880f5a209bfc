"""Flow module: integration accuracy, monodromy, sections, periodic orbits,
isoenergetic reduction and the Gronwall comparison."""
import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from matherlab.flow import (
    CallableField,
    PhaseState,
    Section,
    gronwall_compare,
    integrate,
    periodic_orbit_refine,
    poincare_map,
    reduce_isoenergetic,
    symplectic_defect,
    tangent_flow,
)
from matherlab.models import (
    double_resonance_reduced,
    pendulum_field,
    pendulum_rotor_field,
    product_pendulum_field,
    rotor_series,
)
from matherlab.flow import SeriesField
from matherlab.series import FourierTaylorSeries


def rotor_field(n=1):
    return SeriesField(rotor_series(n))


# -- integrate ---------------------------------------------------------------

def test_free_rotor_exact():
    f = rotor_field(1)
    s0 = PhaseState([0.3], [0.7])
    traj = integrate(f, s0, (0, 10.0), tol=1e-12)
    z = traj.z(10.0)
    assert z[0] == pytest.approx(0.3 + 7.0, abs=1e-10)
    assert z[1] == pytest.approx(0.7, abs=1e-12)


def test_pendulum_energy_drift():
    f = pendulum_field(0.04)
    s0 = PhaseState([2.0], [0.5])
    traj = integrate(f, s0, (0, 1000.0), tol=1e-11)
    assert traj.energy_drift(400) <= 1e-8


def test_linear_system_vs_expm():
    A = np.array([[0.0, 1.0], [-2.0, 0.0]])
    f = CallableField(1, lambda t, z: A @ z, jac=lambda t, z: A,
                      energy=lambda z: 0.5 * (2 * z[0] ** 2 + z[1] ** 2))
    z0 = np.array([0.4, -0.1])
    traj = integrate(f, z0, (0, 3.0), tol=1e-12)
    assert np.allclose(traj.z(3.0), expm(3.0 * A) @ z0, atol=1e-9)


# -- tangent flow ------------------------------------------------------------

def test_tangent_flow_T0_identity():
    f = pendulum_field(0.02)
    _, M = tangent_flow(f, PhaseState([0.5], [0.3]), 0.0)
    assert np.array_equal(M, np.eye(2))


def test_tangent_flow_quadratic_is_expm():
    A = np.array([[0.0, 1.0], [0.3, 0.0]])
    f = CallableField(1, lambda t, z: A @ z, jac=lambda t, z: A)
    _, M = tangent_flow(f, np.array([0.2, 0.1]), 2.0)
    assert np.allclose(M, expm(2.0 * A), atol=1e-9)


def test_tangent_flow_matches_fd_jacobian():
    f = pendulum_field(0.05)
    z0 = np.array([1.1, 0.6])
    T = 3.0
    _, M = tangent_flow(f, z0, T)
    h = 1e-6
    J = np.empty((2, 2))
    for j in range(2):
        dz = np.zeros(2)
        dz[j] = h
        zp = integrate(f, z0 + dz, (0, T), tol=1e-12).z(T)
        zm = integrate(f, z0 - dz, (0, T), tol=1e-12).z(T)
        J[:, j] = (zp - zm) / (2 * h)
    assert np.max(np.abs(M - J)) < 1e-5
    assert symplectic_defect(M) < 1e-7


# -- poincare map ------------------------------------------------------------

def test_rotor_section_return_time():
    f = rotor_field(2)
    s0 = PhaseState([0.2, 0.0], [0.3, 1.0])
    hit, T, DP = poincare_map(f, Section(coord=1, value=2 * np.pi), s0)
    assert T == pytest.approx(2 * np.pi, abs=1e-9)
    # shear structure: dx1'/dy1 = 2*pi at y2 = 1
    assert DP[0, 2] == pytest.approx(2 * np.pi, abs=1e-8)
    assert DP[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(DP[2:, :2], 0.0, atol=1e-9)


def test_harmonic_oscillator_half_period():
    om = 1.7
    A = np.array([[0.0, 1.0], [-om ** 2, 0.0]])
    f = CallableField(1, lambda t, z: A @ z, jac=lambda t, z: A)
    # from a turning point (y = 0), the next y = 0 crossing is half a period
    hit, T, _ = poincare_map(f, Section(coord=1, value=0.0, direction=0),
                             np.array([1.0, 0.0]))
    assert T == pytest.approx(np.pi / om, abs=1e-9)


# -- periodic orbits ---------------------------------------------------------

def pendulum_rotation_period(eps, E):
    return quad(lambda x: 1.0 / np.sqrt(2 * (E + eps * (1 - np.cos(x)))),
                0, 2 * np.pi, limit=200)[0]


def test_pendulum_rotation_orbit_period_matches_quadrature():
    eps, E = 0.04, 0.05
    f = pendulum_field(eps)
    y0 = np.sqrt(2 * E)  # at x = 0 where V = 0
    T_oracle = pendulum_rotation_period(eps, E)
    orbit = periodic_orbit_refine(f, PhaseState([0.0], [y0 * 1.01]),
                                  T_oracle * 1.05, energy=E, winding=[1])
    assert orbit.period == pytest.approx(T_oracle, abs=1e-6)
    assert orbit.residual <= 1e-8
    assert symplectic_defect(orbit.monodromy) < 1e-7


def test_decoupled_rotor_circular_orbit():
    f = rotor_field(2)
    orbit = periodic_orbit_refine(f, PhaseState([0.1, 0.2], [1.0, 0.0]),
                                  2 * np.pi, winding=[1, 0])
    assert orbit.period == pytest.approx(2 * np.pi, abs=1e-9)
    assert np.allclose(np.abs(orbit.floquet), 1.0, atol=1e-7)


def test_double_resonance_hyperbolic_orbit():
    eps, E = 0.04, 0.05
    f = product_pendulum_field(eps)
    # rotation of the second pendulum with the first at its potential max
    y2 = np.sqrt(2 * E)
    T_guess = quad(lambda x: 1.0 / np.sqrt(2 * (E + 2 * eps * (1 - np.cos(x)))),
                   0, 2 * np.pi, limit=200)[0]
    orbit = periodic_orbit_refine(f, PhaseState([0.0, 0.0], [0.0, y2]),
                                  T_guess, energy=E, winding=[0, 1])
    lam = sorted(np.abs(orbit.floquet_nontrivial))
    assert lam[-1] > 1.0 + 1e-4 and lam[0] < 1.0 - 1e-4
    assert lam[0] * lam[-1] == pytest.approx(1.0, abs=1e-6)
    # multiplier should be exp(lambda_1 * T) with lambda_1 = sqrt(eps)
    assert np.log(lam[-1]) == pytest.approx(np.sqrt(eps) * orbit.period, rel=2e-2)


# -- isoenergetic reduction --------------------------------------------------

def test_reduction_affine_exact():
    # H = (y1^2+y2^2)/2 + y3, E = 1  ->  Y = 1 - (y1^2+y2^2)/2
    h = FourierTaylorSeries.quadratic_action(3, np.diag([1.0, 1.0, 0.0]),
                                             linear=[0.0, 0.0, 1.0])
    f = SeriesField(h)
    Y = reduce_isoenergetic(f, 1.0, index=2, branch_seed=0.5)
    rng = np.random.default_rng(0)
    for _ in range(10):
        y = rng.uniform(-0.5, 0.5, 2)
        tau = rng.uniform(0, 2 * np.pi)
        val = Y.solve(rng.uniform(0, 2 * np.pi, 2), y, tau)
        assert val == pytest.approx(1.0 - 0.5 * (y @ y), abs=1e-12)


def test_reduction_resubstitution_residual():
    red = double_resonance_reduced(0.02, 0.05)
    Y = red["reduced"]
    rng = np.random.default_rng(1)
    samples = [(rng.uniform(0, 2 * np.pi, 1), rng.uniform(-0.05, 0.05, 1),
                rng.uniform(0, 2 * np.pi)) for _ in range(1000)]
    assert Y.resubstitution_residual(samples) <= 1e-10


def test_reduced_trajectories_match_parent():
    # pendulum x rotor, eliminate the rotor pair on the branch y2 < 0
    eps, E = 0.03, 0.3
    f = pendulum_rotor_field(eps)
    Y = reduce_isoenergetic(f, E, index=1, branch_seed=-0.7)
    x0, y0 = np.array([1.0]), np.array([0.2])
    z_full = Y.embed(x0, y0, 0.0)
    # on the y2 < 0 branch x2 decreases in physical time, so tau = -x2 grows
    ptraj = integrate(f, z_full, (0.0, 30.0), tol=1e-12)
    from matherlab.flow import ReducedField
    rtraj = integrate(ReducedField(Y), np.concatenate([x0, y0]), (0, 2 * np.pi), tol=1e-11)
    # invert tau = -x2(t) along the parent orbit to compare
    for tau in np.linspace(0.3, 2 * np.pi, 8):
        # x2 is monotone decreasing: bisect for x2(t) = -tau
        lo, hi = 0.0, 30.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if ptraj.z(mid)[1] > -tau:
                lo = mid
            else:
                hi = mid
        t_mid = 0.5 * (lo + hi)
        zp = ptraj.z(t_mid)
        zr = rtraj.z(tau)
        assert abs((zp[0] - zr[0] + np.pi) % (2 * np.pi) - np.pi) < 1e-6
        assert abs(zp[2] - zr[1]) < 1e-6


# -- gronwall ----------------------------------------------------------------

def test_gronwall_identical_fields():
    f = pendulum_field(0.02)
    rep = gronwall_compare(f, f, np.array([0.4, 0.1]), 3.0, n_samples=10)
    assert rep["violations"] == 0
    assert all(r["measured"] <= 1e-9 for r in rep["samples"])


def test_gronwall_linear_closed_form():
    delta = 1e-3
    f0 = CallableField(None, lambda t, z: z, jac=lambda t, z: np.eye(1))
    fe = CallableField(None, lambda t, z: (1 + delta) * z,
                       jac=lambda t, z: (1 + delta) * np.eye(1))
    z0 = np.array([1.0])
    rep = gronwall_compare(f0, fe, z0, 2.0, n_samples=20)
    assert rep["violations"] == 0
    for r in rep["samples"]:
        t = r["t"]
        exact = max(abs(np.exp((1 + delta) * t) - np.exp(t)) * abs(z0[0]),
                    abs(np.exp((1 + delta) * t) - np.exp(t)))
        assert r["measured"] == pytest.approx(exact, abs=1e-6)


def test_gronwall_pendulum_perturbation():
    eps, delta = 0.05, 1e-3
    f0 = pendulum_field(eps)
    fe = pendulum_field(eps + delta)
    rep = gronwall_compare(f0, fe, np.array([1.0, 0.3]), 5.0, n_samples=50)
    assert rep["violations"] == 0
    assert rep["samples"][-1]["measured"] > 0
