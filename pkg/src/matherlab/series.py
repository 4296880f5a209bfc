"""Truncated Fourier-Taylor series and numeric Legendre duality.

A series represents a function of angle variables ``x`` (trigonometric
polynomial, integer modes ``k``) and action variables ``y`` (polynomial in
``y - y0``, multi-indices ``i``):

    F(x, y) = sum_{k, i}  c_{k,i} * exp(i<k, x>) * (y - y0)^i

Coefficients are complex with Hermitian symmetry enforced, so every
evaluation is real.  Series are immutable after construction; all operations
return new objects.
"""
from __future__ import annotations

import json
import math
from itertools import product as _iproduct

import numpy as np

__all__ = [
    "FourierTaylorSeries",
    "NearIntegrableSystem",
    "MalformedSeriesError",
    "DimensionMismatchError",
    "NoConvergenceError",
    "poisson_bracket",
    "legendre_dual",
    "cnorm",
    "truncate",
]

REALITY_TOL = 1e-12


class MalformedSeriesError(ValueError):
    """Reality (Hermitian symmetry) violated beyond tolerance."""


class DimensionMismatchError(ValueError):
    pass


class NoConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


def _key(k, i):
    return (tuple(int(v) for v in k), tuple(int(v) for v in i))


class FourierTaylorSeries:
    """Trig-polynomial in angles times polynomial in actions.

    Parameters
    ----------
    dim_angle, dim_action : int
        Number of angle and action variables.
    coeffs : dict
        Map ``(k, i) -> complex`` with integer tuples ``k`` (Fourier mode)
        and ``i`` (non-negative multi-index).
    base_point : array_like, optional
        Expansion point ``y0`` of the action polynomial (default 0).
    cutoff_K, cutoff_d : int, optional
        Mode and degree cutoffs; inferred from ``coeffs`` if omitted.

    Notes
    -----
    Hermitian symmetry ``c(-k, i) == conj(c(k, i))`` is enforced on
    construction by averaging; a violation beyond ``REALITY_TOL`` (relative)
    raises :class:`MalformedSeriesError`.
    """

    __slots__ = ("dim_angle", "dim_action", "base_point", "coeffs",
                 "cutoff_K", "cutoff_d", "_packed")

    def __init__(self, dim_angle, dim_action, coeffs, base_point=None,
                 cutoff_K=None, cutoff_d=None, _skip_symmetrize=False):
        object.__setattr__(self, "dim_angle", int(dim_angle))
        object.__setattr__(self, "dim_action", int(dim_action))
        if base_point is None:
            base_point = np.zeros(dim_action)
        bp = np.asarray(base_point, dtype=float).copy()
        bp.flags.writeable = False
        object.__setattr__(self, "base_point", bp)

        clean = {}
        for (k, i), c in coeffs.items():
            k = tuple(int(v) for v in k)
            i = tuple(int(v) for v in i)
            if len(k) != dim_angle or len(i) != dim_action:
                raise DimensionMismatchError(
                    f"key ({k}, {i}) does not match dims ({dim_angle}, {dim_action})")
            if any(v < 0 for v in i):
                raise ValueError(f"negative power in multi-index {i}")
            c = complex(c)
            if c != 0:
                clean[(k, i)] = clean.get((k, i), 0j) + c
        if not _skip_symmetrize:
            clean = _symmetrize(clean)
        object.__setattr__(self, "coeffs", clean)

        max_k = max((max(abs(v) for v in k) for (k, _) in clean), default=0)
        max_d = max((sum(i) for (_, i) in clean), default=0)
        object.__setattr__(self, "cutoff_K", int(cutoff_K) if cutoff_K is not None else max_k)
        object.__setattr__(self, "cutoff_d", int(cutoff_d) if cutoff_d is not None else max_d)
        if max_k > self.cutoff_K or max_d > self.cutoff_d:
            raise ValueError("stored modes exceed declared cutoffs")
        object.__setattr__(self, "_packed", None)

    def __setattr__(self, name, value):
        raise AttributeError("FourierTaylorSeries is immutable")

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, dim_angle, dim_action, base_point=None):
        return cls(dim_angle, dim_action, {}, base_point=base_point)

    @classmethod
    def constant(cls, dim_angle, dim_action, value, base_point=None):
        key = ((0,) * dim_angle, (0,) * dim_action)
        return cls(dim_angle, dim_action, {key: complex(value)}, base_point=base_point)

    @classmethod
    def cosine(cls, dim_angle, dim_action, k, amplitude=1.0, base_point=None):
        """amplitude * cos(<k, x>)."""
        k = tuple(int(v) for v in k)
        mk = tuple(-v for v in k)
        i0 = (0,) * dim_action
        a = 0.5 * float(amplitude)
        return cls(dim_angle, dim_action, {(k, i0): a, (mk, i0): a}, base_point=base_point)

    @classmethod
    def sine(cls, dim_angle, dim_action, k, amplitude=1.0, base_point=None):
        """amplitude * sin(<k, x>)."""
        k = tuple(int(v) for v in k)
        mk = tuple(-v for v in k)
        i0 = (0,) * dim_action
        a = float(amplitude)
        return cls(dim_angle, dim_action,
                   {(k, i0): -0.5j * a, (mk, i0): 0.5j * a}, base_point=base_point)

    @classmethod
    def monomial(cls, dim_angle, dim_action, i, coeff=1.0, base_point=None):
        """coeff * (y - y0)^i."""
        key = ((0,) * dim_angle, tuple(int(v) for v in i))
        return cls(dim_angle, dim_action, {key: complex(coeff)}, base_point=base_point)

    @classmethod
    def quadratic_action(cls, dim_angle, A, base_point=None, linear=None, const=0.0):
        """(1/2) <A (y-y0), (y-y0)> + <linear, y-y0> + const, angle-independent."""
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        k0 = (0,) * dim_angle
        coeffs = {}
        for a in range(n):
            for b in range(n):
                if A[a, b] == 0:
                    continue
                i = [0] * n
                i[a] += 1
                i[b] += 1
                key = (k0, tuple(i))
                coeffs[key] = coeffs.get(key, 0j) + 0.5 * A[a, b]
        if linear is not None:
            for a, va in enumerate(np.asarray(linear, dtype=float)):
                if va != 0:
                    i = [0] * n
                    i[a] = 1
                    coeffs[(k0, tuple(i))] = coeffs.get((k0, tuple(i)), 0j) + va
        if const != 0:
            coeffs[(k0, (0,) * n)] = coeffs.get((k0, (0,) * n), 0j) + const
        return cls(dim_angle, n, coeffs, base_point=base_point)

    # -- basics ------------------------------------------------------------
    def __len__(self):
        return len(self.coeffs)

    def coefficient(self, k, i):
        return self.coeffs.get(_key(k, i), 0j)

    def _pack(self):
        packed = self._packed
        if packed is None:
            keys = sorted(self.coeffs)
            K = np.array([k for k, _ in keys], dtype=float).reshape(len(keys), self.dim_angle)
            I = np.array([i for _, i in keys], dtype=np.int64).reshape(len(keys), self.dim_action)
            C = np.array([self.coeffs[key] for key in keys], dtype=complex)
            packed = (K, I, C)
            object.__setattr__(self, "_packed", packed)
        return packed

    def __call__(self, x, y):
        return evaluate(self, x, y)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = FourierTaylorSeries.constant(self.dim_angle, self.dim_action,
                                                 other, self.base_point)
        self._check_compatible(other)
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            out[key] = out.get(key, 0j) + c
        return FourierTaylorSeries(self.dim_angle, self.dim_action, out,
                                   self.base_point,
                                   max(self.cutoff_K, other.cutoff_K),
                                   max(self.cutoff_d, other.cutoff_d))

    __radd__ = __add__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (other * (-1.0) if isinstance(other, FourierTaylorSeries) else -other)

    def __mul__(self, scalar):
        if isinstance(scalar, FourierTaylorSeries):
            return multiply(self, scalar)
        out = {key: c * scalar for key, c in self.coeffs.items()}
        return FourierTaylorSeries(self.dim_angle, self.dim_action, out,
                                   self.base_point, self.cutoff_K, self.cutoff_d)

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if (self.dim_angle != other.dim_angle or self.dim_action != other.dim_action):
            raise DimensionMismatchError("series dimensions differ")
        if not np.allclose(self.base_point, other.base_point, atol=0, rtol=0):
            raise DimensionMismatchError("series base points differ")

    # -- calculus ----------------------------------------------------------
    def dx(self, j):
        """Partial derivative in the angle x_j (mode factor i*k_j)."""
        out = {}
        for (k, i), c in self.coeffs.items():
            if k[j] != 0:
                out[(k, i)] = c * (1j * k[j])
        return FourierTaylorSeries(self.dim_angle, self.dim_action, out,
                                   self.base_point, self.cutoff_K, self.cutoff_d,
                                   _skip_symmetrize=True)

    def dy(self, j):
        """Partial derivative in the action y_j (power rule on (y-y0)^i)."""
        out = {}
        for (k, i), c in self.coeffs.items():
            if i[j] > 0:
                i2 = list(i)
                i2[j] -= 1
                key = (k, tuple(i2))
                out[key] = out.get(key, 0j) + c * i[j]
        return FourierTaylorSeries(self.dim_angle, self.dim_action, out,
                                   self.base_point, self.cutoff_K, self.cutoff_d,
                                   _skip_symmetrize=True)

    def rebase(self, new_base_point):
        """Re-expand the action polynomial at a new base point (exact)."""
        nb = np.asarray(new_base_point, dtype=float)
        shift = nb - self.base_point  # (y - y0) = (y - y1) + shift
        out = {}
        for (k, i), c in self.coeffs.items():
            # expand prod_l ((y-y1)_l + shift_l)^{i_l}
            ranges = [range(v + 1) for v in i]
            for js in _iproduct(*ranges):
                w = c
                for l, (il, jl) in enumerate(zip(i, js)):
                    w *= math.comb(il, jl) * shift[l] ** (il - jl)
                key = (k, tuple(js))
                out[key] = out.get(key, 0j) + w
        return FourierTaylorSeries(self.dim_angle, self.dim_action, out, nb,
                                   self.cutoff_K, self.cutoff_d)

    # -- serialization -----------------------------------------------------
    def to_dict(self):
        entries = [
            {"k": list(k), "i": list(i), "re": c.real, "im": c.imag}
            for (k, i), c in sorted(self.coeffs.items())
        ]
        return {
            "dim_angle": self.dim_angle,
            "dim_action": self.dim_action,
            "base_point": list(self.base_point),
            "cutoff_K": self.cutoff_K,
            "cutoff_d": self.cutoff_d,
            "entries": entries,
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        coeffs = {
            (tuple(e["k"]), tuple(e["i"])): complex(e["re"], e["im"])
            for e in d["entries"]
        }
        return cls(d["dim_angle"], d["dim_action"], coeffs,
                   base_point=d["base_point"],
                   cutoff_K=d["cutoff_K"], cutoff_d=d["cutoff_d"])

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def __repr__(self):
        return (f"FourierTaylorSeries(n_angle={self.dim_angle}, "
                f"n_action={self.dim_action}, terms={len(self.coeffs)}, "
                f"K={self.cutoff_K}, d={self.cutoff_d})")


def _symmetrize(coeffs):
    """Where both (k, i) and (-k, i) are stored, enforce Hermitian symmetry.

    Mismatched pairs beyond tolerance raise; consistent pairs are averaged
    so symmetry holds exactly.  A mode without its partner is kept verbatim
    (intentionally complex intermediates are allowed; real evaluation is
    checked in :func:`evaluate`).
    """
    out = {}
    seen = set()
    scale = max((abs(c) for c in coeffs.values()), default=0.0)
    for (k, i), c in coeffs.items():
        if (k, i) in seen:
            continue
        mk = tuple(-v for v in k)
        cm = coeffs.get((mk, i))
        if cm is None:
            out[(k, i)] = c
            seen.add((k, i))
            continue
        if k == mk:
            out[(k, i)] = c
            seen.add((k, i))
            continue
        defect = abs(cm - c.conjugate())
        if scale and defect > REALITY_TOL * scale:
            raise MalformedSeriesError(
                f"reality violated at {(k, i)}: {c} vs conj {cm} (defect {defect:.3e})")
        avg = 0.5 * (c + cm.conjugate())
        out[(k, i)] = avg
        out[(mk, i)] = avg.conjugate()
        seen.add((k, i))
        seen.add((mk, i))
    return {key: c for key, c in out.items() if c != 0}


def evaluate(series, x, y, validity_radius=None, warn=None):
    """Evaluate the series at a single point (x, y); returns a real scalar.

    The imaginary part is discarded after checking it is below
    ``REALITY_TOL`` relative to the coefficient scale.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape[-1] != series.dim_angle or y.shape[-1] != series.dim_action:
        raise DimensionMismatchError("evaluation point has wrong dimensions")
    if validity_radius is not None and warn is not None:
        if np.linalg.norm(y - series.base_point) > validity_radius:
            warn(f"evaluation outside validity radius {validity_radius}")
    K, I, C = series._pack()
    if len(C) == 0:
        return 0.0
    dy = y - series.base_point
    phase = np.exp(1j * (K @ x))
    mono = np.prod(dy[None, :] ** I, axis=1)
    val = np.sum(C * phase * mono)
    scale = np.sum(np.abs(C) * np.abs(mono)) + 1e-300
    if abs(val.imag) > REALITY_TOL * max(scale, 1.0):
        raise MalformedSeriesError(
            f"evaluation has imaginary part {val.imag:.3e} (scale {scale:.3e})")
    return float(val.real)


def multiply(F, G, cutoff_K=None, cutoff_d=None):
    """Series product, truncated to the given (default: larger) cutoffs."""
    F._check_compatible(G)
    if cutoff_K is None:
        cutoff_K = max(F.cutoff_K, G.cutoff_K)
    if cutoff_d is None:
        cutoff_d = max(F.cutoff_d, G.cutoff_d)
    out = {}
    for (k1, i1), c1 in F.coeffs.items():
        for (k2, i2), c2 in G.coeffs.items():
            k = tuple(a + b for a, b in zip(k1, k2))
            if any(abs(v) > cutoff_K for v in k):
                continue
            i = tuple(a + b for a, b in zip(i1, i2))
            if sum(i) > cutoff_d:
                continue
            key = (k, i)
            out[key] = out.get(key, 0j) + c1 * c2
    return FourierTaylorSeries(F.dim_angle, F.dim_action, out, F.base_point,
                               cutoff_K, cutoff_d)


def poisson_bracket(F, G, cutoff_K=None, cutoff_d=None):
    """{F, G} = sum_j dF/dx_j dG/dy_j - dF/dy_j dG/dx_j, truncated.

    Antisymmetric by construction; requires matching dimensions and base
    points.  The angle/action pairing is (x_j, y_j) for j < min(n_angle,
    n_action); extra variables of either kind commute.
    """
    F._check_compatible(G)
    n = min(F.dim_angle, F.dim_action)
    terms = []
    for j in range(n):
        terms.append(multiply(F.dx(j), G.dy(j), cutoff_K, cutoff_d))
        terms.append(multiply(F.dy(j), G.dx(j), cutoff_K, cutoff_d) * (-1.0))
    out = FourierTaylorSeries.zero(F.dim_angle, F.dim_action, F.base_point)
    for t in terms:
        out = out + t
    return out


def legendre_dual(H, x, v, y_seed=None, tol=1e-10, max_iter=50):
    """Solve v = dH/dy(x, y) for y by damped Newton; return (y, L).

    ``H`` may be a FourierTaylorSeries or any object with gradient_y /
    hessian_yy callables.  L = <v, y> - H(x, y).

    Raises
    ------
    NoConvergenceError
        If the residual ||v - dH/dy|| does not fall below ``tol`` within
        ``max_iter`` Newton steps.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if isinstance(H, FourierTaylorSeries):
        n = H.dim_action
        grads = [H.dy(j) for j in range(n)]
        hess = [[grads[a].dy(b) for b in range(n)] for a in range(n)]

        def grad_y(y):
            return np.array([evaluate(g, x, y) for g in grads])

        def hess_yy(y):
            return np.array([[evaluate(hess[a][b], x, y) for b in range(n)]
                             for a in range(n)])

        def value(y):
            return evaluate(H, x, y)

        y = np.array(H.base_point, dtype=float) if y_seed is None else np.asarray(y_seed, dtype=float)
    else:
        grad_y = lambda y: np.asarray(H.gradient_y(x, y), dtype=float)
        hess_yy = lambda y: np.asarray(H.hessian_yy(x, y), dtype=float)
        value = lambda y: float(H.value(x, y))
        y = np.zeros_like(v) if y_seed is None else np.asarray(y_seed, dtype=float)

    res = v - grad_y(y)
    for _ in range(max_iter):
        nrm = np.linalg.norm(res)
        if nrm <= tol:
            L = float(v @ y) - value(y)
            return y, L
        try:
            step = np.linalg.solve(hess_yy(y), res)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-8:
            y_try = y + lam * step
            res_try = v - grad_y(y_try)
            if np.linalg.norm(res_try) < nrm:
                y, res = y_try, res_try
                break
            lam *= 0.5
        else:
            break
    raise NoConvergenceError(
        f"Legendre dual Newton stalled, residual {np.linalg.norm(res):.3e}",
        residual=float(np.linalg.norm(res)))


def cnorm(series, j, radius=1.0):
    """Certified upper estimate of the C^j norm on ||y - y0||_inf <= radius.

    Sums, over all derivative multi-indices of total order <= j, termwise
    sup bounds |c| * |k|_1^{|a|} * fall(i, b) * r^{|i|-|b|}.  Never smaller
    than the sampled sup of any single derivative combination.
    """
    if j < 0:
        raise ValueError("derivative order must be >= 0")
    r = float(radius)
    total = 0.0
    for (k, i), c in series.coeffs.items():
        k1 = sum(abs(v) for v in k)
        ii = sum(i)
        term = 0.0
        # enumerate total x-order a and y-order b with a + b <= j
        for b in range(0, min(j, ii) + 1):
            fall = _max_falling(i, b)
            rb = r ** (ii - b)
            for a in range(0, j - b + 1):
                term = max(term, (k1 ** a) * fall * rb)
        # sum over all orders so the estimate also covers summed norms
        total += abs(c) * term * _n_orders(j)
    return total


def _max_falling(i, b):
    """Max over |beta| = b of prod falling factorials i_l! / (i_l - beta_l)!."""
    best = 0
    caps = [v for v in i if v > 0]

    def rec(rem, idx, acc):
        nonlocal best
        if rem == 0:
            best = max(best, acc)
            return
        if idx >= len(caps):
            return
        f = 1
        for take in range(0, min(rem, caps[idx]) + 1):
            if take > 0:
                f *= caps[idx] - take + 1
            rec(rem - take, idx + 1, acc * f)

    if b == 0:
        return 1
    rec(b, 0, 1)
    return best


def _n_orders(j):
    # number of (a, b) total-order pairs with a + b <= j; a crude but
    # certified multiplier covering summed C^j conventions
    return (j + 1) * (j + 2) // 2


def truncate(series, Kx, dy):
    """Drop modes with ||k||_inf > Kx or |i| > dy; idempotent.

    Returns (truncated series, tail) where tail is the dropped part, so the
    caller can measure the truncation error (cnorm of the tail).
    """
    keep, drop = {}, {}
    for (k, i), c in series.coeffs.items():
        if max((abs(v) for v in k), default=0) <= Kx and sum(i) <= dy:
            keep[(k, i)] = c
        else:
            drop[(k, i)] = c
    kept = FourierTaylorSeries(series.dim_angle, series.dim_action, keep,
                               series.base_point, min(series.cutoff_K, Kx),
                               min(series.cutoff_d, dy))
    tail = FourierTaylorSeries(series.dim_angle, series.dim_action, drop,
                               series.base_point, series.cutoff_K, series.cutoff_d)
    return kept, tail


class NearIntegrableSystem:
    """H(x, y) = h(y) + epsilon * P(x, y) with convexity data.

    ``h`` must be a FourierTaylorSeries with zero Fourier modes only; ``P``
    is a general series.  (m, M) bound the Hessian of h on the ball of
    radius R around the base point, checked by sampling.
    """

    def __init__(self, h, P, epsilon, smoothness_r=8, m=None, M=None, R=1.0):
        if any(any(v != 0 for v in k) for (k, _) in h.coeffs):
            raise ValueError("h must contain k=0 modes only")
        h._check_compatible(P)
        if smoothness_r < 8:
            raise ValueError("smoothness_r must be >= 8")
        if epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        self.h = h
        self.P = P
        self.epsilon = float(epsilon)
        self.smoothness_r = int(smoothness_r)
        self.R = float(R)
        if m is None or M is None:
            m_est, M_est = self.sample_convexity()
            m = m_est if m is None else m
            M = M_est if M is None else M
        if not (0 < m <= M):
            raise ValueError("need 0 < m <= M")
        self.m = float(m)
        self.M = float(M)

    def full_series(self):
        return self.h + self.epsilon * self.P

    def sample_convexity(self, n_samples=64, seed=0):
        """Min/max Rayleigh quotients of hess h over sampled (y, v) pairs."""
        rng = np.random.default_rng(seed)
        n = self.h.dim_action
        grads = [self.h.dy(j) for j in range(n)]
        hess = [[grads[a].dy(b) for b in range(n)] for a in range(n)]
        lo, hi = np.inf, -np.inf
        x0 = np.zeros(self.h.dim_angle)
        for _ in range(n_samples):
            y = self.h.base_point + self.R * rng.uniform(-1, 1, n)
            Hm = np.array([[evaluate(hess[a][b], x0, y) for b in range(n)]
                           for a in range(n)])
            w = np.linalg.eigvalsh(0.5 * (Hm + Hm.T))
            lo, hi = min(lo, w[0]), max(hi, w[-1])
        return lo, hi

    def check_convexity(self, n_samples=64, seed=0):
        lo, hi = self.sample_convexity(n_samples, seed)
        return self.m <= lo + 1e-9 and hi <= self.M + 1e-9
