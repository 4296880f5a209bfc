"""Desk-scale model systems shared by the CLI, tests and demos."""
from __future__ import annotations

import numpy as np

from .flow import MechanicalField, SeriesField, TimePeriodicHamiltonian
from .resonance import unimodular_complete
from .series import FourierTaylorSeries, NearIntegrableSystem

TWOPI = 2.0 * np.pi


def rotor_series(n=1, A=None):
    """h(y) = (1/2) <A y, y>, integrable."""
    if A is None:
        A = np.eye(n)
    return FourierTaylorSeries.quadratic_action(n, A)


def pendulum_series(eps):
    """H(x, y) = y^2/2 + eps*(cos x - 1); hyperbolic fixed point at x = 0."""
    h = FourierTaylorSeries.quadratic_action(1, np.eye(1))
    P = FourierTaylorSeries.cosine(1, 1, (1,)) + FourierTaylorSeries.constant(1, 1, -1.0)
    return h + eps * P


def pendulum_field(eps):
    return SeriesField(pendulum_series(eps))


def pendulum_system(eps):
    h = FourierTaylorSeries.quadratic_action(1, np.eye(1))
    P = FourierTaylorSeries.cosine(1, 1, (1,)) + FourierTaylorSeries.constant(1, 1, -1.0)
    return NearIntegrableSystem(h, P, eps, m=0.5, M=1.5, R=2.0)


def pendulum_rotor_field(eps):
    """H = (y1^2 + y2^2)/2 + eps*(cos x1 - 1): pendulum x rotor."""
    V = lambda x: eps * (np.cos(x[0]) - 1.0)
    gradV = lambda x: np.array([-eps * np.sin(x[0]), 0.0])
    hessV = lambda x: np.array([[-eps * np.cos(x[0]), 0.0], [0.0, 0.0]])
    return MechanicalField(np.eye(2), V, gradV, hessV)


def product_pendulum_field(eps, weights=(1.0, 2.0)):
    """Double-resonance model: H = |y|^2/2 + V, V = eps*sum w_i (cos x_i - 1).

    V has a nondegenerate max at x = 0 with -hess V = eps*diag(weights), so
    the fixed-point rates are lambda_i = sqrt(eps*w_i).
    """
    w = np.asarray(weights, dtype=float)

    def V(x):
        return eps * float(w @ (np.cos(x) - 1.0))

    def gradV(x):
        return -eps * w * np.sin(x)

    def hessV(x):
        return np.diag(-eps * w * np.cos(x))

    def V_many(pts):
        return eps * ((np.cos(pts) - 1.0) @ w)

    def gradV_many(pts):
        return -eps * w[None, :] * np.sin(pts)

    def hessV_many(pts):
        n = pts.shape[0]
        H = np.zeros((n, 2, 2))
        d = -eps * w[None, :] * np.cos(pts)
        H[:, 0, 0] = d[:, 0]
        H[:, 1, 1] = d[:, 1]
        return H

    return MechanicalField(np.eye(2), V, gradV, hessV,
                           V_many=V_many, gradV_many=gradV_many,
                           hessV_many=hessV_many)


def product_pendulum_series(eps, weights=(1.0, 2.0)):
    h = FourierTaylorSeries.quadratic_action(2, np.eye(2))
    out = h
    for i, wi in enumerate(weights):
        k = [0, 0]
        k[i] = 1
        out = out + eps * wi * (FourierTaylorSeries.cosine(2, 2, k)
                                + FourierTaylorSeries.constant(2, 2, -1.0))
    return out


def three_mode_system(eps, base_point=None):
    """2-dof near-integrable system with a 3-mode perturbation.

    P = cos x1 + cos(x1 + x2) + cos x2; with respect to omega = (0, 1) the
    first mode is resonant and the other two are not.
    """
    h = FourierTaylorSeries.quadratic_action(2, np.eye(2), base_point=base_point)
    P = (FourierTaylorSeries.cosine(2, 2, (1, 0), base_point=base_point)
         + FourierTaylorSeries.cosine(2, 2, (1, 1), base_point=base_point)
         + FourierTaylorSeries.cosine(2, 2, (0, 1), base_point=base_point))
    return NearIntegrableSystem(h, P, eps, m=0.5, M=1.5, R=2.0)


def mechanical_in_frame(field: MechanicalField, U):
    """Config-space change q = U x (U unimodular): A -> U A U^t, V -> V o U^-1."""
    U = np.asarray(U, dtype=float)
    Ui = np.linalg.inv(U)
    A2 = U @ field.A @ U.T
    V2 = lambda q: field.V(Ui @ q)
    gradV2 = lambda q: Ui.T @ np.asarray(field.gradV(Ui @ q))
    hessV2 = lambda q: Ui.T @ np.asarray(field.hessV(Ui @ q)) @ Ui
    V2_many = lambda pts: field.V_many(pts @ Ui.T)
    gradV2_many = lambda pts: field.gradV_many(pts @ Ui.T) @ Ui
    hessV2_many = lambda pts: np.einsum(
        "ra,nab,bc->nrc", Ui.T, field.hessV_many(pts @ Ui.T), Ui)
    return MechanicalField(A2, V2, gradV2, hessV2, V_many=V2_many,
                           gradV_many=gradV2_many, hessV_many=hessV2_many)


def winding_frame(g):
    """Unimodular U mapping the homology class g to the last basis vector.

    Built so U @ g = e_n; the returned matrix is exact (ints).
    """
    g = [int(v) for v in g]
    n = len(g)
    frame = unimodular_complete(g)      # columns: [g, c_2, ..., c_n]
    Iinv = np.array(frame.I_inv)        # Iinv @ g = e_1
    perm = np.zeros((n, n), dtype=int)  # rotate e_1 -> e_n
    for i in range(n - 1):
        perm[i, i + 1] = 1
    perm[n - 1, 0] = 1
    return perm @ Iinv


def double_resonance_reduced(eps, E, g=(1, 1), weights=(1.0, 2.0)):
    """Isoenergetic reduction of the double-resonance model for class g.

    The configuration frame sends g to e_2; the reduced time is tau = -q_2
    and the eliminated momentum runs on the negative branch, where the
    reduced Hamiltonian is fiberwise convex (the class actually traversed is
    -g, the time-mirror of g; for these even potentials the action spectrum
    is identical).

    Returns a dict with the frame, the frame-rotated mechanical field and
    the TimePeriodicHamiltonian.
    """
    base = product_pendulum_field(eps, weights)
    U = winding_frame(g)
    rot = mechanical_in_frame(base, U)
    seed = -np.sqrt(max(2.0 * E / rot.A[1, 1], 1e-12))
    Y = TimePeriodicHamiltonian(rot, E, index=1, branch_seed=seed)
    return {"U": U, "field": rot, "reduced": Y, "eps": eps, "E": E,
            "g": tuple(int(v) for v in g)}
