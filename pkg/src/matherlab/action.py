"""Discrete variational engine for time-periodic reduced systems.

A loop of reduced period 2*pi is broken at the section times T_i = 2*pi*i/m.
Each segment carries a two-point generating function F_i(x, x'); interior
stationarity is the discrete Euler-Lagrange system, its second variation the
cyclic Jacobi matrix, and positive definiteness of that matrix is
cross-validated against the Floquet trace of the reconstructed orbit.

Reduced systems expose vectorized gradients/hessians of the reduced
Hamiltonian Y(x, y, tau); see AnalyticReduced and MechanicalReduced.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .series import NoConvergenceError

__all__ = [
    "AnalyticReduced", "MechanicalReduced", "BrokenConfiguration",
    "JacobiMatrix", "TwoPointSolver", "two_point_action", "loop_action",
    "minimal_configuration", "jacobi_matrix", "hyperbolicity_check",
    "continue_in_energy",
]

TWOPI = 2.0 * np.pi


class AnalyticReduced:
    """Reduced Hamiltonian from explicit callables (vectorized in x, y)."""

    def __init__(self, Y, Yx, Yy, Yxx, Yxy, Yyy, dt_dtau=None, period=TWOPI, E=None):
        self._f = (Y, Yx, Yy, Yxx, Yxy, Yyy)
        self._dt = dt_dtau
        self.period = period
        self.E = E

    def gradients_vec(self, x, y, tau):
        Y, Yx, Yy = self._f[0], self._f[1], self._f[2]
        return Y(x, y, tau), Yx(x, y, tau), Yy(x, y, tau)

    def hessians_vec(self, x, y, tau):
        Yxx, Yxy, Yyy = self._f[3], self._f[4], self._f[5]
        return Yxx(x, y, tau), Yxy(x, y, tau), Yyy(x, y, tau)

    def dt_dtau_vec(self, x, y, tau):
        if self._dt is None:
            return None
        return self._dt(x, y, tau)

    @classmethod
    def free_rotor(cls):
        z = np.zeros_like
        return cls(lambda x, y, t: 0.5 * y * y,
                   lambda x, y, t: z(np.asarray(x, dtype=float)),
                   lambda x, y, t: y,
                   lambda x, y, t: z(np.asarray(x, dtype=float)),
                   lambda x, y, t: z(np.asarray(x, dtype=float)),
                   lambda x, y, t: np.ones_like(np.asarray(y, dtype=float)))

    @classmethod
    def pendulum_like(cls, eps):
        """Y = y^2/2 + eps*cos(x), autonomous (trivially 2*pi-periodic).

        The loop action of an autonomous reduced system is constant in the
        base point (time translation); use ``forced_pendulum`` when genuine
        x-dependence of F is needed.
        """
        z = np.zeros_like
        return cls(lambda x, y, t: 0.5 * y * y + eps * np.cos(x),
                   lambda x, y, t: -eps * np.sin(x),
                   lambda x, y, t: y,
                   lambda x, y, t: -eps * np.cos(x),
                   lambda x, y, t: z(np.asarray(x, dtype=float)),
                   lambda x, y, t: np.ones_like(np.asarray(y, dtype=float)))

    @classmethod
    def forced_pendulum(cls, eps, beta=0.5):
        """Y = y^2/2 + eps*(1 + beta*cos(tau))*cos(x): time-periodic, with
        the (x, tau) -> (-x, -tau) symmetry pinning stationary base points
        to the axes {0, pi}."""
        z = np.zeros_like
        f = lambda t: 1.0 + beta * np.cos(t)
        return cls(lambda x, y, t: 0.5 * y * y + eps * f(t) * np.cos(x),
                   lambda x, y, t: -eps * f(t) * np.sin(x),
                   lambda x, y, t: y,
                   lambda x, y, t: -eps * f(t) * np.cos(x),
                   lambda x, y, t: z(np.asarray(x, dtype=float)),
                   lambda x, y, t: np.ones_like(np.asarray(y, dtype=float)))


class MechanicalReduced:
    """Closed-form isoenergetic reduction of a 2-dof mechanical system.

    Parent H = <A p, p>/2 + V(q) on {H = E}, eliminating the pair with
    index ``index`` on the branch where the eliminated momentum is negative
    (the fiberwise convex branch for tau = -q_n).
    """

    def __init__(self, parent, E, index=1, period=TWOPI):
        self.parent = parent
        self.E = float(E)
        self.index = int(index)
        self.period = period
        self.A = np.asarray(parent.A, dtype=float)
        if self.A.shape != (2, 2):
            raise ValueError("MechanicalReduced expects a 2-dof parent")

    def _points(self, x, tau):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        tau = np.broadcast_to(np.asarray(tau, dtype=float), x.shape)
        pts = np.empty((x.size, 2))
        pts[:, 1 - self.index] = x
        pts[:, self.index] = -tau
        return pts

    def _solve(self, x, y, tau):
        """Negative root of (1/2)(aii y^2 + 2 ain y Y + ann Y^2) + V = E."""
        i, n = 1 - self.index, self.index
        aii, ain, ann = self.A[i, i], self.A[i, n], self.A[n, n]
        V = self.parent.V_many(self._points(x, tau)).reshape(np.shape(x))
        disc = (ain * y) ** 2 - ann * (aii * y * y + 2 * V - 2 * self.E)
        if np.any(disc <= 0):
            raise NoConvergenceError("reduction branch lost: discriminant <= 0")
        return (-ain * y - np.sqrt(disc)) / ann

    def all_vec(self, x, y, tau):
        """(Y, Yx, Yy, Yxx, Yxy, Yyy, dt/dtau) in one vectorized pass."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        pts = self._points(x, tau)
        i, n = 1 - self.index, self.index
        aii, ain, ann = self.A[i, i], self.A[i, n], self.A[n, n]
        V = self.parent.V_many(pts).reshape(x.shape)
        disc = (ain * y) ** 2 - ann * (aii * y * y + 2 * V - 2 * self.E)
        if np.any(disc <= 0):
            raise NoConvergenceError("reduction branch lost: discriminant <= 0")
        Yv = (-ain * y - np.sqrt(disc)) / ann
        gV = self.parent.gradV_many(pts).reshape(x.shape + (2,))
        hV = self.parent.hessV_many(pts).reshape(x.shape + (2, 2))
        Hn = ain * y + ann * Yv            # (A p)_n
        Hy = aii * y + ain * Yv            # (A p)_i
        Hx = gV[..., i]
        Yx = -Hx / Hn
        Yy = -Hy / Hn
        Hxx = hV[..., i, i]
        Yxx = -(Hxx + Yx * (ann * Yx)) / Hn
        Yxy = -(Yx * (ain + ann * Yy)) / Hn
        Yyy = -(aii + ain * Yy + Yy * (ain + ann * Yy)) / Hn
        return Yv, Yx, Yy, Yxx, Yxy, Yyy, -1.0 / Hn

    def gradients_vec(self, x, y, tau):
        Yv, Yx, Yy, *_ = self.all_vec(x, y, tau)
        return Yv, Yx, Yy

    def hessians_vec(self, x, y, tau):
        _, _, _, Yxx, Yxy, Yyy, _ = self.all_vec(x, y, tau)
        return Yxx, Yxy, Yyy

    def dt_dtau_vec(self, x, y, tau):
        return self.all_vec(x, y, tau)[-1]

    def embed(self, x, y, tau):
        """Lift to the parent phase space (q, p) on H = E."""
        Yv = self._solve(np.asarray(x, dtype=float), np.asarray(y, dtype=float), tau)
        q = np.empty(2)
        p = np.empty(2)
        q[1 - self.index], q[self.index] = x, -tau
        p[1 - self.index], p[self.index] = y, Yv
        return np.concatenate([q, p])


# ---------------------------------------------------------------------------
# segment solver


@dataclass
class SegmentData:
    F: np.ndarray          # segment actions
    y0: np.ndarray         # initial momenta
    y1: np.ndarray         # final momenta
    mon: np.ndarray        # (m, 2, 2) segment monodromies d(x1,y1)/d(x0,y0)
    tphys: np.ndarray      # physical time per segment (nan if unavailable)

    def d2F(self, i):
        """(F_xx, F_xx', F_x'x') of segment i from its monodromy."""
        a, b = self.mon[i, 0, 0], self.mon[i, 0, 1]
        d = self.mon[i, 1, 1]
        return a / b, -1.0 / b, d / b


class TwoPointSolver:
    """Batched shooting solver for the segment two-point problems.

    All m segments of a broken loop are integrated simultaneously with a
    fixed-step RK4 on the reduced Hamilton equations, the variational
    equations, the action quadrature and (when available) physical time.
    """

    def __init__(self, reduced, m, n_steps=24, tol=1e-10, max_iter=40):
        self.red = reduced
        self.m = int(m)
        self.dt = reduced.period / m
        self.times = reduced.period * np.arange(m + 1) / m
        self.n_steps = int(n_steps)
        self.tol = tol
        self.max_iter = max_iter

    # state arrays: x, y, M11, M12, M21, M22, F, t
    def _flow(self, x0, y0, t0):
        m = len(x0)
        x = np.array(x0, dtype=float)
        y = np.array(y0, dtype=float)
        M = np.tile(np.eye(2), (m, 1, 1))
        F = np.zeros(m)
        tp = np.zeros(m)
        h = self.dt / self.n_steps
        combined = getattr(self.red, "all_vec", None)
        has_t = self.red.dt_dtau_vec(x, y, t0) is not None

        def rhs(x, y, M, tau):
            if combined is not None:
                Yv, Yx, Yy, Yxx, Yxy, Yyy, dtp = combined(x, y, tau)
                if not has_t:
                    dtp = 0.0
            else:
                Yv, Yx, Yy = self.red.gradients_vec(x, y, tau)
                Yxx, Yxy, Yyy = self.red.hessians_vec(x, y, tau)
                dtp = self.red.dt_dtau_vec(x, y, tau) if has_t else 0.0
            dx = Yy
            dy = -Yx
            # dM = J M with J = [[Yxy, Yyy], [-Yxx, -Yxy]]
            J = np.empty_like(M)
            J[:, 0, 0] = Yxy
            J[:, 0, 1] = Yyy
            J[:, 1, 0] = -Yxx
            J[:, 1, 1] = -Yxy
            dM = np.einsum("nab,nbc->nac", J, M)
            dF = y * Yy - Yv
            return dx, dy, dM, dF, dtp

        tau = np.array(t0, dtype=float)
        for _ in range(self.n_steps):
            k1 = rhs(x, y, M, tau)
            k2 = rhs(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], M + 0.5 * h * k1[2], tau + 0.5 * h)
            k3 = rhs(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], M + 0.5 * h * k2[2], tau + 0.5 * h)
            k4 = rhs(x + h * k3[0], y + h * k3[1], M + h * k3[2], tau + h)
            x = x + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            y = y + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            M = M + (h / 6) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            F = F + (h / 6) * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
            tp = tp + (h / 6) * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
            tau = tau + h
        return x, y, M, F, tp if has_t else np.full(m, np.nan)

    def seed_momenta(self, x_from, x_to, t0=None):
        """Initial guess: solve dY/dy(x_mid, y, tau_mid) = (x' - x)/dt."""
        v = (np.asarray(x_to) - np.asarray(x_from)) / self.dt
        xm = 0.5 * (np.asarray(x_from) + np.asarray(x_to))
        tm = (self.times[:len(xm)] if t0 is None else np.asarray(t0)) + 0.5 * self.dt
        y = np.array(v, dtype=float)
        for _ in range(30):
            _, _, Yy = self.red.gradients_vec(xm, y, tm)
            _, _, Yyy = self.red.hessians_vec(xm, y, tm)
            r = Yy - v
            if np.max(np.abs(r)) < 1e-12:
                break
            y = y - r / Yyy
        return y

    def solve(self, x_from, x_to, y_seed=None, t0=None):
        """Shooting Newton on all segments; returns SegmentData.

        ``x_from[i]`` -> ``x_to[i]`` over [T_i, T_{i+1}] in lifted
        coordinates (or from explicit start times ``t0``).  Raises
        NoConvergenceError on Newton failure and flags a vanished twist
        (conjugate point) the same way.
        """
        x_from = np.asarray(x_from, dtype=float)
        x_to = np.asarray(x_to, dtype=float)
        if t0 is None:
            t0 = self.times[:len(x_from)]
        else:
            t0 = np.asarray(t0, dtype=float)
        y = (self.seed_momenta(x_from, x_to, t0=t0) if y_seed is None
             else np.array(y_seed, dtype=float))
        for it in range(self.max_iter):
            x1, y1, M, F, tp = self._flow(x_from, y, t0)
            r = x1 - x_to
            if np.max(np.abs(r)) <= self.tol:
                return SegmentData(F=F, y0=y, y1=y1, mon=M, tphys=tp)
            b = M[:, 0, 1]
            if np.any(np.abs(b) < 1e-12):
                raise NoConvergenceError("conjugate point: dx'/dy0 vanished")
            step = -r / b
            # damped update against the residual norm
            lam = 1.0
            base = np.max(np.abs(r))
            while lam > 1e-4:
                y_try = y + lam * step
                x1t, *_ = self._flow(x_from, y_try, t0)
                if np.max(np.abs(x1t - x_to)) < base:
                    y = y_try
                    break
                lam *= 0.5
            else:
                raise NoConvergenceError(
                    f"segment shooting stalled, residual {base:.2e}", residual=base)
        raise NoConvergenceError("segment shooting: max iterations")

    def curve(self, i, x_from, x_to, y0, n=50):
        """Dense minimizer curve of one segment (for reporting)."""
        def r(x, y, t):
            _, Yx, Yy = self.red.gradients_vec(x, y, t)
            return Yy, -Yx

        xs = [float(x_from)]
        x = np.array([x_from], dtype=float)
        y = np.array([y0], dtype=float)
        taus = [self.times[i]]
        h = self.dt / n
        tau = np.array([self.times[i]])
        for _ in range(n):
            k1 = r(x, y, tau)
            k2 = r(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], tau + 0.5 * h)
            k3 = r(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], tau + 0.5 * h)
            k4 = r(x + h * k3[0], y + h * k3[1], tau + h)
            x = x + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            y = y + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            tau = tau + h
            xs.append(float(x[0]))
            taus.append(float(tau[0]))
        return np.array(taus), np.array(xs)


def two_point_action(reduced, x, x_prime, i, m=32, twist_check=True):
    """Two-point generating function of segment i and its derivatives.

    Returns F_i value, the minimizer curve, dF/dx = -y_i, dF/dx' = y_{i+1}
    and second derivatives from the segment monodromy.  The twist
    dF2/dx dx' < 0 is checked; a violation means the segment time is too
    long for a unique minimizer.
    """
    solver = TwoPointSolver(reduced, m)
    # place the pair at segment slot i by shifting times
    t0 = np.array([solver.times[i]])
    x0 = np.array([float(x)])
    x1 = np.array([float(x_prime)])
    y = solver.seed_momenta(x0, x1, t0=t0)
    for _ in range(solver.max_iter):
        xe, ye, M, F, _ = solver._flow(x0, y, t0)
        r = xe - x1
        if abs(r[0]) <= solver.tol:
            break
        y = y - r / M[:, 0, 1]
    else:
        raise NoConvergenceError("two-point BVP did not converge")
    a, b, d = M[0, 0, 0], M[0, 0, 1], M[0, 1, 1]
    Fxx, Fxxp, Fxpxp = a / b, -1.0 / b, d / b
    if twist_check and Fxxp >= 0:
        raise NoConvergenceError("twist violated: d2F/dx dx' >= 0 "
                                 "(non-unique minimizer on this window)")
    taus, curve = solver.curve(i, x, x_prime, y[0])
    return {"F": float(F[0]), "dF_dx": float(-y[0]), "dF_dxp": float(ye[0]),
            "d2F": {"xx": float(Fxx), "xxp": float(Fxxp), "xpxp": float(Fxpxp)},
            "y0": float(y[0]), "y1": float(ye[0]), "curve": (taus, curve)}


# ---------------------------------------------------------------------------
# broken configurations


@dataclass
class BrokenConfiguration:
    points: np.ndarray          # lifted positions x_0..x_{m-1}
    times: np.ndarray
    winding: int
    total_action: float
    interior_EL_residual: float
    segments: SegmentData
    energy: float = None
    interior_definite: bool = True

    @property
    def m(self):
        return len(self.points)

    def closure_points(self):
        return np.append(self.points, self.points[0] + TWOPI * self.winding)

    def boundary_EL_residual(self):
        """Stationarity defect at the base point x_0 (zero at critical x)."""
        return float(self.segments.y1[-1] - self.segments.y0[0])

    def corner_defect(self):
        """Velocity jump |dx/dtau(0+) - dx/dtau(2pi-)| at the base point."""
        return abs(self.boundary_EL_residual())

    def physical_period(self):
        tp = self.segments.tphys
        return float(np.sum(tp)) if np.all(np.isfinite(tp)) else None

    def to_dict(self):
        return {"points": self.points.tolist(), "winding": self.winding,
                "total_action": self.total_action,
                "interior_EL_residual": self.interior_EL_residual,
                "energy": self.energy}


def _interior_newton(solver, pts, tol=1e-11, max_iter=60):
    """Solve the interior discrete EL system with x_0 (and closure) fixed.

    pts: lifted closure points of length m+1; entries 1..m-1 are unknowns.
    The linearization is the positive-definite interior block of the Jacobi
    matrix (tridiagonal); an indefinite block is flagged, not fatal.
    """
    m = len(pts) - 1
    pts = np.array(pts, dtype=float)
    seg = None
    y_warm = None
    definite = True
    for it in range(max_iter):
        seg = solver.solve(pts[:-1], pts[1:], y_seed=y_warm)
        y_warm = seg.y0
        r = seg.y1[:-1] - seg.y0[1:]          # dF_{i-1}/dx' + dF_i/dx = y1 - y0
        if np.max(np.abs(r)) <= tol:
            break
        # tridiagonal interior Jacobi block
        a = np.array([seg.d2F(i) for i in range(m)])
        diag = a[:-1, 2] + a[1:, 0]           # F_{i-1,x'x'} + F_{i,xx}
        off = a[1:-1, 1]                      # F_{i,xx'}
        n_int = m - 1
        J = np.zeros((n_int, n_int))
        np.fill_diagonal(J, diag)
        for i in range(n_int - 1):
            J[i, i + 1] = off[i]
            J[i + 1, i] = off[i]
        try:
            w = np.linalg.eigvalsh(J)
            definite = bool(w[0] > 0)
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise NoConvergenceError("interior Newton: singular Jacobi block")
        lam = 1.0
        base = np.max(np.abs(r))
        while lam > 1e-4:
            cand = pts.copy()
            cand[1:-1] += lam * step
            try:
                seg_t = solver.solve(cand[:-1], cand[1:], y_seed=y_warm)
            except NoConvergenceError:
                lam *= 0.5
                continue
            r_t = seg_t.y1[:-1] - seg_t.y0[1:]
            if np.max(np.abs(r_t)) < base:
                pts = cand
                seg, y_warm = seg_t, seg_t.y0
                break
            lam *= 0.5
        else:
            if base <= 1e-9:   # stalled at rounding level: accept
                break
            raise NoConvergenceError(f"interior Newton stalled at {base:.2e}",
                                     residual=base)
    r = seg.y1[:-1] - seg.y0[1:]
    if np.max(np.abs(r)) > 1e-8:
        raise NoConvergenceError(f"interior EL residual {np.max(np.abs(r)):.2e}")
    return pts, seg, definite


def loop_action(reduced, x, m=32, winding=1, init=None, n_steps=24):
    """F(x) = inf over loops gamma(0) = gamma(2pi) = x with given winding.

    Interior points solve the discrete Euler-Lagrange system by Newton with
    the interior Jacobi block as linearization.  Returns (value, config).
    """
    x = float(x)
    if init is None:
        pts = x + TWOPI * winding * np.arange(m + 1) / m
    else:
        pts = np.array(init, dtype=float)
    pts, seg, definite = _interior_newton(TwoPointSolver(reduced, m, n_steps=n_steps), pts)
    cfg = BrokenConfiguration(
        points=pts[:-1], times=TWOPI * np.arange(m) / m, winding=winding,
        total_action=float(np.sum(seg.F)),
        interior_EL_residual=float(np.max(np.abs(seg.y1[:-1] - seg.y0[1:]))),
        segments=seg, energy=getattr(reduced, "E", None),
        interior_definite=definite)
    return cfg.total_action, cfg


def minimal_configuration(reduced, m=32, winding=1, n_starts=64, refine=True,
                          basin_tol=1e-6, n_steps=24):
    """Global minimum of F(., E) over the base point by multistart descent.

    Returns {x_star, config, F, basins, gap}: ``basins`` lists distinct
    near-minimal base points within ``basin_tol`` of the optimum (two-orbit
    bifurcation detection), ``gap`` the action distance to the best basin
    not within tolerance.
    """
    xs = np.linspace(0, TWOPI, n_starts, endpoint=False)
    vals = []
    init = None
    configs = {}
    for x0 in xs:
        try:
            F, cfg = loop_action(reduced, x0, m=m, winding=winding, init=init,
                                 n_steps=n_steps)
        except NoConvergenceError:
            vals.append(np.inf)
            continue
        init = np.append(cfg.points, cfg.points[0] + TWOPI * cfg.winding).copy()
        init += (xs[1] - xs[0]) if len(xs) > 1 else 0.0
        vals.append(F)
        configs[x0] = (F, cfg)
    vals = np.array(vals)
    if not np.any(np.isfinite(vals)):
        raise NoConvergenceError("no start converged")
    order = np.argsort(vals)
    x_best = xs[order[0]]
    F_best, cfg_best = configs[x_best]

    if refine:
        x_best, F_best, cfg_best = _refine_minimum(reduced, x_best, cfg_best, m,
                                                   winding, n_steps=n_steps)

    flat = bool(np.max(vals[np.isfinite(vals)]) - np.min(vals[np.isfinite(vals)]) < 1e-10)
    basins, gap = _basins(xs, vals, x_best, F_best, basin_tol)
    return {"x_star": float(x_best % TWOPI), "F": float(F_best), "config": cfg_best,
            "basins": basins, "gap": gap, "degenerate_flat": flat}


def _refine_minimum(reduced, x0, cfg, m, winding, tol=1e-11, max_iter=40,
                    n_steps=24):
    """Full cyclic Newton: also release the base point (closed stationarity)."""
    solver = TwoPointSolver(reduced, m, n_steps=n_steps)
    pts = np.append(cfg.points, cfg.points[0] + TWOPI * winding).astype(float)
    y_warm = cfg.segments.y0
    seg = cfg.segments
    for _ in range(max_iter):
        r_int = seg.y1[:-1] - seg.y0[1:]
        r0 = seg.y1[-1] - seg.y0[0]
        r = np.concatenate([[r0], r_int])
        if np.max(np.abs(r)) <= tol:
            break
        Jm = jacobi_matrix_from_segments(seg).matrix
        try:
            step = np.linalg.solve(Jm, -r)
        except np.linalg.LinAlgError:
            break
        lam, base = 1.0, np.max(np.abs(r))
        while lam > 1e-4:
            cand = pts.copy()
            cand[:-1] += lam * step
            cand[-1] = cand[0] + TWOPI * winding
            try:
                seg_t = solver.solve(cand[:-1], cand[1:], y_seed=y_warm)
            except NoConvergenceError:
                lam *= 0.5
                continue
            rt = np.concatenate([[seg_t.y1[-1] - seg_t.y0[0]],
                                 seg_t.y1[:-1] - seg_t.y0[1:]])
            if np.max(np.abs(rt)) < base:
                pts, seg, y_warm = cand, seg_t, seg_t.y0
                break
            lam *= 0.5
        else:
            break
    cfg = BrokenConfiguration(
        points=pts[:-1], times=TWOPI * np.arange(m) / m, winding=winding,
        total_action=float(np.sum(seg.F)),
        interior_EL_residual=float(np.max(np.abs(seg.y1[:-1] - seg.y0[1:]))),
        segments=seg, energy=getattr(reduced, "E", None))
    return pts[0], cfg.total_action, cfg


def _basins(xs, vals, x_best, F_best, basin_tol):
    near = [(x, v) for x, v in zip(xs, vals) if np.isfinite(v) and v - F_best <= basin_tol]
    clusters = []
    for x, v in sorted(near):
        for cl in clusters:
            if min(abs(x - cl[-1][0]), TWOPI - abs(x - cl[-1][0])) < 3 * (xs[1] - xs[0]):
                cl.append((x, v))
                break
        else:
            clusters.append([(x, v)])
    # merge wrap-around
    if len(clusters) > 1:
        first, last = clusters[0], clusters[-1]
        if (first[0][0] + TWOPI) - last[-1][0] < 3 * (xs[1] - xs[0]):
            clusters[0] = last + first
            clusters.pop()
    basins = [{"x": float(min(cl, key=lambda t: t[1])[0]),
               "F": float(min(v for _, v in cl))} for cl in clusters]
    others = [v for x, v in zip(xs, vals)
              if np.isfinite(v) and v - F_best > basin_tol]
    gap = float(min(others) - F_best) if others else np.inf
    return basins, gap


# ---------------------------------------------------------------------------
# Jacobi matrix and hyperbolicity


@dataclass
class JacobiMatrix:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    B: np.ndarray

    @property
    def lambda0(self):
        return float(self.eigenvalues[0])

    @property
    def gap(self):
        return float(self.eigenvalues[1] - self.eigenvalues[0])


def jacobi_matrix_from_segments(seg: SegmentData):
    m = len(seg.F)
    d2 = np.array([seg.d2F(i) for i in range(m)])   # (xx, xxp, xpxp)
    B = d2[:, 1]
    if np.any(B >= 0):
        raise NoConvergenceError("twist violated: some B_i >= 0")
    A = np.roll(d2[:, 2], 1) + d2[:, 0]             # F_{i-1,x'x'} + F_{i,xx}
    J = np.zeros((m, m))
    np.fill_diagonal(J, A)
    for i in range(m - 1):
        J[i, i + 1] += B[i]
        J[i + 1, i] += B[i]
    J[0, m - 1] += B[m - 1]
    J[m - 1, 0] += B[m - 1]
    w = np.linalg.eigvalsh(J)
    return JacobiMatrix(matrix=J, eigenvalues=w, B=B)


def jacobi_matrix(config: BrokenConfiguration):
    """Cyclic tridiagonal-with-corners second variation of the loop action."""
    if config.interior_EL_residual > 1e-8:
        raise ValueError("configuration does not satisfy interior EL")
    return jacobi_matrix_from_segments(config.segments)


def hyperbolicity_check(config: BrokenConfiguration, tol_eig=1e-8, tol_trace=1e-6):
    """Jacobi positivity vs Floquet trace of the reconstructed orbit.

    The reduced 2x2 monodromy is the ordered product of the segment
    monodromies; hyperbolic iff |trace| > 2 + tol.  ``consistent`` compares
    that verdict with lambda_0 > tol of the Jacobi matrix; a parabolic case
    (lambda_0 ~ 0, |trace| ~ 2) is labeled, not failed.
    """
    J = jacobi_matrix(config)
    M = np.eye(2)
    for i in range(config.m):
        M = config.segments.mon[i] @ M
    tr = float(np.trace(M))
    multipliers = np.linalg.eigvals(M)
    hyper = abs(tr) > 2.0 + tol_trace
    positive = J.lambda0 > tol_eig
    parabolic = (abs(J.lambda0) <= tol_eig) and (abs(abs(tr) - 2.0) <= 1e-3)
    return {"jacobi_positive": positive, "lambda0": J.lambda0,
            "floquet_trace": tr, "multipliers": multipliers,
            "hyperbolic": hyper, "parabolic": parabolic,
            "consistent": bool(positive == hyper),
            "monodromy": M}


# ---------------------------------------------------------------------------
# energy continuation


def continue_in_energy(family, E_range, steps=20, m=32, winding=1, n_starts=32,
                       n_steps=24):
    """Track minimal configurations of ``family(E)`` across an energy range.

    Natural continuation with warm starts; at each energy the global
    minimum and the best competing basin are recorded.  Bifurcation energies
    are bisected where the global-minimum branch switches basins with equal
    action (within 1e-8) and distinct dF/dE.
    """
    Es = np.linspace(E_range[0], E_range[1], steps)
    branch = []
    for E in Es:
        red = family(E)
        out = minimal_configuration(red, m=m, winding=winding, n_starts=n_starts,
                                    n_steps=n_steps)
        cfg = out["config"]
        hyp = hyperbolicity_check(cfg)
        branch.append({"E": float(E), "x_star": out["x_star"], "F": out["F"],
                       "lambda0": hyp["lambda0"], "trace": hyp["floquet_trace"],
                       "hyperbolic": hyp["hyperbolic"],
                       "basins": out["basins"],
                       "T_phys": cfg.physical_period()})
    # bifurcations: the global-minimum branch jumps base point across the step
    bifurcations = []
    span = abs(E_range[1] - E_range[0])
    for a, b in zip(branch[:-1], branch[1:]):
        dx = abs((a["x_star"] - b["x_star"] + np.pi) % TWOPI - np.pi)
        if dx > 0.5:
            lo, hi = a["E"], b["E"]
            fam_lo = a
            while abs(hi - lo) > max(1e-4 * span, 1e-7):
                mid = 0.5 * (lo + hi)
                out = minimal_configuration(family(mid), m=m, winding=winding,
                                            n_starts=max(8, n_starts // 2),
                                            refine=False, n_steps=n_steps)
                dx_lo = abs((out["x_star"] - fam_lo["x_star"] + np.pi) % TWOPI - np.pi)
                if dx_lo < 0.5:
                    lo = mid
                else:
                    hi = mid
            bifurcations.append(0.5 * (lo + hi))
    return {"branch": branch, "bifurcations": bifurcations}
