"""Hamiltonian flows: integration, monodromy, sections, periodic orbits,
isoenergetic reduction and flow comparison.

Vector fields are wrapped in small field objects exposing ``rhs(t, z)``,
``jac(t, z)`` and (autonomous case) ``energy(z)``; state is ``z = (x, y)``
with angles kept unwrapped during integration and winding extracted at the
end.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import solve_ivp

from .series import FourierTaylorSeries, NoConvergenceError, evaluate

__all__ = [
    "PhaseState", "Trajectory", "PeriodicOrbit", "TimePeriodicHamiltonian",
    "SeriesField", "MechanicalField", "CallableField", "ReducedField",
    "integrate", "tangent_flow", "poincare_map", "periodic_orbit_refine",
    "reduce_isoenergetic", "gronwall_compare", "symplectic_defect",
]

TWOPI = 2.0 * np.pi


@dataclass(frozen=True)
class PhaseState:
    """Point (x, y) at time t; x stored mod 2*pi with integer winding."""
    x: np.ndarray
    y: np.ndarray
    t: float = 0.0
    winding: np.ndarray = None

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite phase state")
        w = self.winding
        if w is None:
            w = np.floor_divide(x, TWOPI).astype(int)
        else:
            w = np.atleast_1d(np.asarray(w)).astype(int)
        object.__setattr__(self, "x", np.mod(x, TWOPI))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "winding", w)

    @property
    def x_lift(self):
        """Unwrapped angles x + 2*pi*winding."""
        return self.x + TWOPI * self.winding

    @property
    def z(self):
        return np.concatenate([self.x_lift, self.y])

    @classmethod
    def from_z(cls, z, t=0.0):
        n = len(z) // 2
        return cls(z[:n], z[n:], t)


# ---------------------------------------------------------------------------
# field wrappers


class SeriesField:
    """Autonomous Hamiltonian field from a FourierTaylorSeries."""

    def __init__(self, H: FourierTaylorSeries):
        self.H = H
        n = H.dim_action
        if H.dim_angle != n:
            raise ValueError("need matching angle/action dimensions")
        self.dof = n
        self._Hx = [H.dx(j) for j in range(n)]
        self._Hy = [H.dy(j) for j in range(n)]
        self._Hxx = [[self._Hx[a].dx(b) for b in range(n)] for a in range(n)]
        self._Hxy = [[self._Hx[a].dy(b) for b in range(n)] for a in range(n)]
        self._Hyy = [[self._Hy[a].dy(b) for b in range(n)] for a in range(n)]
        self.autonomous = True

    def energy(self, z):
        n = self.dof
        return evaluate(self.H, z[:n], z[n:])

    def rhs(self, t, z):
        n = self.dof
        x, y = z[:n], z[n:]
        dx = [evaluate(s, x, y) for s in self._Hy]
        dy = [-evaluate(s, x, y) for s in self._Hx]
        return np.array(dx + dy)

    def jac(self, t, z):
        n = self.dof
        x, y = z[:n], z[n:]
        Hxx = np.array([[evaluate(self._Hxx[a][b], x, y) for b in range(n)] for a in range(n)])
        Hxy = np.array([[evaluate(self._Hxy[a][b], x, y) for b in range(n)] for a in range(n)])
        Hyy = np.array([[evaluate(self._Hyy[a][b], x, y) for b in range(n)] for a in range(n)])
        top = np.hstack([Hxy.T, Hyy])
        bot = np.hstack([-Hxx, -Hxy])
        return np.vstack([top, bot])


class MechanicalField:
    """H = (1/2) <A y, y> + V(x); V supplied with gradient and Hessian.

    Optional vectorized evaluators (``V_many`` etc., acting on point arrays
    of shape (N, dof)) speed up the reduction machinery; they default to
    per-point loops.
    """

    def __init__(self, A, V, gradV, hessV, V_many=None, gradV_many=None,
                 hessV_many=None):
        self.A = np.asarray(A, dtype=float)
        self.dof = self.A.shape[0]
        self.V, self.gradV, self.hessV = V, gradV, hessV
        self._V_many = V_many
        self._gradV_many = gradV_many
        self._hessV_many = hessV_many
        self.autonomous = True

    def V_many(self, pts):
        if self._V_many is not None:
            return self._V_many(pts)
        return np.array([self.V(p) for p in pts])

    def gradV_many(self, pts):
        if self._gradV_many is not None:
            return self._gradV_many(pts)
        return np.array([self.gradV(p) for p in pts])

    def hessV_many(self, pts):
        if self._hessV_many is not None:
            return self._hessV_many(pts)
        return np.array([self.hessV(p) for p in pts])

    def energy(self, z):
        n = self.dof
        return 0.5 * z[n:] @ self.A @ z[n:] + self.V(z[:n])

    def rhs(self, t, z):
        n = self.dof
        return np.concatenate([self.A @ z[n:], -np.asarray(self.gradV(z[:n]))])

    def jac(self, t, z):
        n = self.dof
        J = np.zeros((2 * n, 2 * n))
        J[:n, n:] = self.A
        J[n:, :n] = -np.asarray(self.hessV(z[:n]))
        return J


class CallableField:
    """Arbitrary field from callables (rhs required, jac/energy optional)."""

    def __init__(self, dof, rhs, jac=None, energy=None, autonomous=True):
        self.dof = dof
        self._rhs, self._jac, self._energy = rhs, jac, energy
        self.autonomous = autonomous

    def rhs(self, t, z):
        return np.asarray(self._rhs(t, z), dtype=float)

    def jac(self, t, z):
        if self._jac is not None:
            return np.asarray(self._jac(t, z), dtype=float)
        return _fd_jacobian(lambda w: self.rhs(t, w), z)

    def energy(self, z):
        if self._energy is None:
            raise AttributeError("field has no energy function")
        return float(self._energy(z))


def _fd_jacobian(f, z, h=1e-7):
    f0 = f(z)
    J = np.empty((len(f0), len(z)))
    for j in range(len(z)):
        dz = np.zeros_like(z)
        dz[j] = h
        J[:, j] = (f(z + dz) - f(z - dz)) / (2 * h)
    return J


# ---------------------------------------------------------------------------
# integration


class Trajectory:
    """Dense-output trajectory with winding bookkeeping."""

    def __init__(self, field, sol, t0, z0):
        self.field = field
        self.sol = sol
        self.t0 = t0
        self.z0 = z0

    @property
    def t_span(self):
        return (self.sol.t[0], self.sol.t[-1])

    def z(self, t):
        return self.sol.sol(t)

    def state(self, t):
        return PhaseState.from_z(self.z(t), t)

    def sample(self, n=200):
        ts = np.linspace(self.sol.t[0], self.sol.t[-1], n)
        return ts, np.array([self.z(t) for t in ts])

    def energy_drift(self, n=200):
        if not getattr(self.field, "autonomous", True):
            raise ValueError("energy drift defined for autonomous fields only")
        ts, zs = self.sample(n)
        E = np.array([self.field.energy(z) for z in zs])
        return float(np.max(np.abs(E - E[0])))

    def to_csv_rows(self, n=200):
        """Rows t, x..., y..., winding..., E for trajectory export."""
        ts, zs = self.sample(n)
        ndof = self.field.dof
        rows = []
        for t, z in zip(ts, zs):
            st = PhaseState.from_z(z, t)
            E = self.field.energy(z) if getattr(self.field, "autonomous", True) else np.nan
            rows.append([t, *st.x, *st.y, *st.winding, E])
        return rows


def integrate(field, s0, t_span, tol=1e-10, max_step=np.inf):
    """Integrate the field from state s0 over t_span with DOP853.

    Energy drift of an autonomous field stays below ``tol * (1 + |E|)`` per
    unit time for the desk-scale systems this artifact targets.
    """
    z0 = s0.z if isinstance(s0, PhaseState) else np.asarray(s0, dtype=float)
    t0 = s0.t if isinstance(s0, PhaseState) else t_span[0]
    sol = solve_ivp(field.rhs, (t_span[0], t_span[1]), z0, method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True, max_step=max_step)
    if not sol.success:
        raise NoConvergenceError(f"integration failed: {sol.message}")
    return Trajectory(field, sol, t0, z0)


def tangent_flow(field, s0, T, tol=1e-11, t0=0.0):
    """Flow map and monodromy: returns (z(T), M) with M = dPhi^T/dz0."""
    z0 = s0.z if isinstance(s0, PhaseState) else np.asarray(s0, dtype=float)
    n2 = len(z0)
    if T == 0:
        return z0.copy(), np.eye(n2)

    def rhs(t, w):
        z = w[:n2]
        M = w[n2:].reshape(n2, n2)
        dz = field.rhs(t, z)
        dM = field.jac(t, z) @ M
        return np.concatenate([dz, dM.ravel()])

    w0 = np.concatenate([z0, np.eye(n2).ravel()])
    sol = solve_ivp(rhs, (t0, t0 + T), w0, method="DOP853", rtol=tol, atol=tol * 1e-2)
    if not sol.success:
        raise NoConvergenceError(f"tangent flow failed: {sol.message}")
    w = sol.y[:, -1]
    return w[:n2], w[n2:].reshape(n2, n2)


def symplectic_defect(M):
    """|| M^T J M - J ||_max for the standard symplectic form."""
    n = M.shape[0] // 2
    J = np.zeros_like(M)
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return float(np.max(np.abs(M.T @ J @ M - J)))


# ---------------------------------------------------------------------------
# sections and periodic orbits


@dataclass
class Section:
    """Hyperplane section g(z) = z[coord] - value = 0 with crossing direction."""
    coord: int
    value: float
    direction: int = 1

    def g(self, z):
        return z[self.coord] - self.value

    def grad(self, z):
        e = np.zeros_like(z)
        e[self.coord] = 1.0
        return e


def poincare_map(field, section, s0, t_max=1e4, tol=1e-11, skip_initial=True):
    """First transversal section crossing: (hit state, return time, differential).

    The differential is the full-space return-map matrix
    ``(I - f grad_g^T / <grad_g, f>) M`` evaluated at the hit; restricted to
    the section tangent space it is the section map linearization.
    """
    z0 = s0.z if isinstance(s0, PhaseState) else np.asarray(s0, dtype=float)
    n2 = len(z0)

    def rhs(t, w):
        z = w[:n2]
        M = w[n2:].reshape(n2, n2)
        return np.concatenate([field.rhs(t, z), (field.jac(t, z) @ M).ravel()])

    def event(t, w):
        return section.g(w[:n2])

    event.terminal = True
    event.direction = section.direction
    t_start = 1e-8 if skip_initial and abs(section.g(z0)) < 1e-12 else 0.0
    w0 = np.concatenate([z0, np.eye(n2).ravel()])
    if t_start:
        pre = solve_ivp(rhs, (0, t_start), w0, method="DOP853", rtol=tol, atol=tol * 1e-2)
        w0 = pre.y[:, -1]
    sol = solve_ivp(rhs, (t_start, t_max), w0, method="DOP853", rtol=tol,
                    atol=tol * 1e-2, events=event, dense_output=True)
    if not sol.t_events[0].size:
        raise NoConvergenceError(f"no section crossing within t_max={t_max}")
    t_hit = float(sol.t_events[0][0])
    w_hit = sol.sol(t_hit)
    z_hit = w_hit[:n2]
    M = w_hit[n2:].reshape(n2, n2)
    f = field.rhs(t_hit, z_hit)
    g = section.grad(z_hit)
    gf = g @ f
    if abs(gf) < 1e-6:
        raise NoConvergenceError(f"tangential section crossing, |dg/dt|={abs(gf):.2e}")
    DP = (np.eye(n2) - np.outer(f, g) / gf) @ M
    return PhaseState.from_z(z_hit, t_hit), t_hit, DP


@dataclass
class PeriodicOrbit:
    anchor: PhaseState
    period: float
    energy: float
    monodromy: np.ndarray
    floquet: np.ndarray          # all 2n multipliers
    floquet_nontrivial: np.ndarray  # trivial pair deflated (autonomous case)
    residual: float
    winding: np.ndarray = dc_field(default=None)

    def is_hyperbolic(self, tol=1e-6):
        lam = np.abs(self.floquet_nontrivial)
        return bool(np.any(lam > 1 + tol) and np.any(lam < 1 / (1 + tol)))


def _deflated_multipliers(field, z0, M, t_anchor=0.0):
    """Nontrivial Floquet multipliers: restrict the return-map differential
    to the section tangent intersected with the energy level."""
    n2 = M.shape[0]
    f = field.rhs(t_anchor, z0)
    if not getattr(field, "autonomous", True):
        return np.linalg.eigvals(M)
    n = field.dof
    gH = _energy_gradient(field, z0)
    # DP on the section with normal along f
    DP = (np.eye(n2) - np.outer(f, f) / (f @ f)) @ M
    # orthonormal basis of {v : f.v = 0, gH.v = 0}
    B = np.vstack([f, gH])
    _, _, Vt = np.linalg.svd(B)
    Q = Vt[2:].T
    Mred = Q.T @ DP @ Q
    return np.linalg.eigvals(Mred)


def _energy_gradient(field, z, h=1e-7):
    g = np.empty_like(z)
    for j in range(len(z)):
        dz = np.zeros_like(z)
        dz[j] = h
        g[j] = (field.energy(z + dz) - field.energy(z - dz)) / (2 * h)
    return g


def periodic_orbit_refine(field, guess, T_guess, energy=None, winding=None,
                          tol=1e-10, max_iter=30):
    """Newton refinement of a closed orbit.

    Unknowns are (z0, T); equations are the closure condition
    Phi^T(z0) = z0 + (2*pi*winding, 0), a phase condition along the flow
    direction and, when ``energy`` is given, H(z0) = E.

    Returns a :class:`PeriodicOrbit` with residual <= 1e-8 and deflated
    Floquet multipliers.
    """
    z = (guess.z if isinstance(guess, PhaseState) else np.asarray(guess, dtype=float)).copy()
    T = float(T_guess)
    n2 = len(z)
    ndof = n2 // 2
    if winding is None:
        winding = np.zeros(ndof, dtype=int)
    shift = np.concatenate([TWOPI * np.asarray(winding, dtype=float), np.zeros(ndof)])

    M = np.eye(n2)
    for _ in range(max_iter):
        zT, M = tangent_flow(field, z, T, tol=min(tol, 1e-11))
        fT = field.rhs(T, zT)
        F = zT - z - shift
        rows = [np.hstack([M - np.eye(n2), fT[:, None]])]
        rhs_vec = [-F]
        if energy is not None:
            gH = _energy_gradient(field, z)
            rows.append(np.hstack([gH[None, :], [[0.0]]]))
            rhs_vec.append([energy - field.energy(z)])
        f0 = field.rhs(0.0, z)
        rows.append(np.hstack([f0[None, :], [[0.0]]]))
        rhs_vec.append([0.0])
        Jmat = np.vstack(rows)
        rvec = np.concatenate([np.atleast_1d(r) for r in rhs_vec])
        res = np.linalg.norm(F) + (abs(energy - field.energy(z)) if energy is not None else 0.0)
        if res <= 1e-3 * tol + 1e-12:
            break
        step, *_ = np.linalg.lstsq(Jmat, rvec, rcond=None)
        lam = 1.0
        base = res
        while lam > 1e-6:
            z_try = z + lam * step[:n2]
            T_try = T + lam * step[n2]
            if T_try <= 0:
                lam *= 0.5
                continue
            zT_try, _ = tangent_flow(field, z_try, T_try, tol=min(tol, 1e-11))
            r_try = np.linalg.norm(zT_try - z_try - shift)
            if energy is not None:
                r_try += abs(energy - field.energy(z_try))
            if r_try < base:
                z, T = z_try, T_try
                break
            lam *= 0.5
        else:
            break
    zT, M = tangent_flow(field, z, T, tol=min(tol, 1e-11))
    residual = float(np.linalg.norm(zT - z - shift))
    if residual > 1e-8:
        raise NoConvergenceError(f"orbit refinement stalled, residual {residual:.2e}",
                                 residual=residual)
    E = field.energy(z) if getattr(field, "autonomous", True) else np.nan
    flo = np.linalg.eigvals(M)
    flo_nt = _deflated_multipliers(field, z, M)
    return PeriodicOrbit(anchor=PhaseState.from_z(z, 0.0), period=T, energy=E,
                         monodromy=M, floquet=flo, floquet_nontrivial=flo_nt,
                         residual=residual, winding=np.asarray(winding, dtype=int))


# ---------------------------------------------------------------------------
# isoenergetic reduction


class TimePeriodicHamiltonian:
    """Reduced Hamiltonian Y(x, y, tau) solving H(x, x_n=-tau, y, y_n=Y) = E.

    The reduced equations dx/dtau = dY/dy, dy/dtau = -dY/dx are canonical.
    Y is fiberwise convex on branches where dH/dy_n < 0; orbit machinery in
    the action module assumes that orientation.
    """

    def __init__(self, parent, E, index, branch_seed, period=TWOPI):
        self.parent = parent
        self.E = float(E)
        self.index = int(index)
        self.period = float(period)
        self._seed = float(branch_seed)
        self.dof = parent.dof - 1

    def _full_point(self, x, y, tau, yn):
        n = self.parent.dof
        xf = np.empty(n)
        yf = np.empty(n)
        red = [j for j in range(n) if j != self.index]
        xf[red] = x
        xf[self.index] = -tau
        yf[red] = y
        yf[self.index] = yn
        return xf, yf

    def solve(self, x, y, tau, tol=1e-12, max_iter=60):
        """Newton solve for y_n on the branch anchored at branch_seed."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        yn = self._seed
        for _ in range(max_iter):
            xf, yf = self._full_point(x, y, tau, yn)
            z = np.concatenate([xf, yf])
            r = self.parent.energy(z) - self.E
            if abs(r) <= tol:
                return yn
            dH = self._parent_grad(z)[self.parent.dof + self.index]
            if abs(dH) < 1e-10:
                raise NoConvergenceError("dH/dy_n vanished during reduction solve")
            yn -= r / dH
        raise NoConvergenceError(f"reduction Newton stalled, residual {abs(r):.2e}",
                                 residual=abs(r))

    def _parent_grad(self, z):
        if hasattr(self.parent, "_grad_cache_fn"):
            return self.parent._grad_cache_fn(z)
        if isinstance(self.parent, SeriesField):
            n = self.parent.dof
            x, y = z[:n], z[n:]
            gx = [evaluate(s, x, y) for s in self.parent._Hx]
            gy = [evaluate(s, x, y) for s in self.parent._Hy]
            return np.array(gx + gy)
        if isinstance(self.parent, MechanicalField):
            n = self.parent.dof
            return np.concatenate([np.asarray(self.parent.gradV(z[:n])),
                                   self.parent.A @ z[n:]])
        return _fd_jacobian(lambda w: np.atleast_1d(self.parent.energy(w)), z)[0]

    def value(self, x, y, tau):
        return self.solve(x, y, tau)

    def gradients(self, x, y, tau):
        """(Y, dY/dx, dY/dy, dY/dtau) by implicit differentiation."""
        yn = self.solve(x, y, tau)
        xf, yf = self._full_point(x, y, tau, yn)
        z = np.concatenate([xf, yf])
        g = self._parent_grad(z)
        n = self.parent.dof
        red = [j for j in range(n) if j != self.index]
        Hn = g[n + self.index]
        Yx = -g[red] / Hn
        Yy = -g[[n + j for j in red]] / Hn
        Ytau = g[self.index] / Hn  # d/dtau = -d/dx_n
        return yn, Yx, Yy, Ytau

    def rhs(self, tau, w):
        m = self.dof
        _, Yx, Yy, _ = self.gradients(w[:m], w[m:], tau)
        return np.concatenate([Yy, -Yx])

    def jac(self, tau, w):
        return _fd_jacobian(lambda v: self.rhs(tau, v), w)

    def dt_dtau(self, x, y, tau):
        """Physical time per unit reduced time: -1 / (dH/dy_n)."""
        yn = self.solve(x, y, tau)
        xf, yf = self._full_point(x, y, tau, yn)
        z = np.concatenate([xf, yf])
        return -1.0 / self._parent_grad(z)[self.parent.dof + self.index]

    def embed(self, x, y, tau):
        """Lift a reduced point to the parent phase space (on H = E)."""
        yn = self.solve(x, y, tau)
        xf, yf = self._full_point(x, y, tau, yn)
        return np.concatenate([xf, yf])

    def resubstitution_residual(self, samples):
        """max |H(x, -tau, y, Y) - E| over an iterable of (x, y, tau)."""
        worst = 0.0
        for x, y, tau in samples:
            z = self.embed(np.atleast_1d(x), np.atleast_1d(y), tau)
            worst = max(worst, abs(self.parent.energy(z) - self.E))
        return worst


class ReducedField(CallableField):
    """Adapter making a TimePeriodicHamiltonian usable as a flow field."""

    def __init__(self, Y: TimePeriodicHamiltonian):
        super().__init__(Y.dof, Y.rhs, jac=Y.jac, autonomous=False)
        self.Y = Y


def reduce_isoenergetic(field, E, index, branch_seed, window_check=None):
    """Isoenergetic reduction of an autonomous field to a time-periodic one.

    Solves H(x, -tau, y, Y) = E for the eliminated action ``y_index``,
    anchored on the branch containing ``branch_seed``.  Fails fast if
    |dH/dy_n| < 1e-6 at the checked window points.
    """
    Y = TimePeriodicHamiltonian(field, E, index, branch_seed)
    if window_check is not None:
        for x, y, tau in window_check:
            yn = Y.solve(np.atleast_1d(x), np.atleast_1d(y), tau)
            xf, yf = Y._full_point(np.atleast_1d(x), np.atleast_1d(y), tau, yn)
            z = np.concatenate([xf, yf])
            dH = Y._parent_grad(z)[field.dof + index]
            if abs(dH) < 1e-6:
                raise ValueError(f"dH/dy_n = {dH:.2e} too small on window")
    return Y


# ---------------------------------------------------------------------------
# flow comparison (Gronwall-type bound)


def gronwall_compare(field0, field_eps, z0, T, A=None, B=None, n_samples=50,
                     probe_box=0.5, tol=1e-10, seed=0):
    """Measured C^1 flow difference against the bound (B/A)(1-e^{-At})e^{2At}.

    A bounds the C^2 norm of both fields, B the C^1 norm of the difference;
    if not supplied they are estimated by sampling a box of radius
    ``probe_box`` around the initial point.  Returns per-sample records
    {t, measured, bound} plus the estimated (A, B).
    """
    z0 = np.asarray(z0, dtype=float)
    n2 = len(z0)
    rng = np.random.default_rng(seed)
    if A is None or B is None:
        pts = z0 + probe_box * rng.uniform(-1, 1, size=(40, n2))
        A_est, B_est = 0.0, 0.0
        h = 1e-5
        for p in pts:
            J0 = field0.jac(0.0, p)
            Je = field_eps.jac(0.0, p)
            A_est = max(A_est, np.linalg.norm(field0.rhs(0.0, p), np.inf),
                        np.linalg.norm(field_eps.rhs(0.0, p), np.inf),
                        np.abs(J0).sum(axis=1).max(), np.abs(Je).sum(axis=1).max())
            for j in range(n2):
                dp = np.zeros(n2)
                dp[j] = h
                d2 = (field0.jac(0.0, p + dp) - field0.jac(0.0, p - dp)) / (2 * h)
                A_est = max(A_est, np.abs(d2).sum(axis=1).max())
            diff = field_eps.rhs(0.0, p) - field0.rhs(0.0, p)
            B_est = max(B_est, np.linalg.norm(diff, np.inf),
                        np.abs(Je - J0).sum(axis=1).max())
        A = A if A is not None else float(A_est)
        B = B if B is not None else float(B_est)

    def flow_with_tangent(field, t):
        zT, M = tangent_flow(field, z0, t, tol=tol)
        return zT, M

    ts = np.linspace(0, T, n_samples + 1)[1:]
    records = []
    for t in ts:
        z_a, M_a = flow_with_tangent(field0, t)
        z_b, M_b = flow_with_tangent(field_eps, t)
        measured = max(np.linalg.norm(z_b - z_a, np.inf),
                       np.abs(M_b - M_a).sum(axis=1).max())
        bound = (B / A) * (1 - np.exp(-A * t)) * np.exp(2 * A * t) if A > 0 else 0.0
        records.append({"t": float(t), "measured": float(measured), "bound": float(bound)})
    return {"A": float(A), "B": float(B), "samples": records,
            "violations": sum(1 for r in records if r["measured"] > r["bound"] + 1e-12)}
