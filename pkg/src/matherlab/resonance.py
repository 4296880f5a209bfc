"""Integer-lattice and frequency machinery.

Exactness conventions: unimodular frames are built in Python-int arithmetic
(determinants are exactly +-1, inverses exact); resonant mode filtering uses
Fraction frequencies so the test <k, omega> == 0 is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from itertools import product as _iproduct

import numpy as np

from .series import FourierTaylorSeries

__all__ = [
    "ResonanceFrame", "ResonantPath", "dirichlet_approx", "rational_period",
    "unimodular_complete", "resonant_project", "build_resonant_path",
    "classify_resonance", "cover_path", "ConvexHamiltonian",
]


def _dist_to_int(v):
    f = v - math.floor(v)
    return min(f, 1.0 - f)


def dirichlet_approx(omega, K):
    """Smallest integer 1 <= k < K with ||k*omega||_Z <= K^(-1/n).

    Exhaustive scan; existence is guaranteed by Dirichlet's theorem, so the
    scan always terminates before ceil(K).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if K <= 1:
        raise ValueError("need K > 1")
    n = len(omega)
    bound = K ** (-1.0 / n)
    k_hi = int(math.ceil(K))
    for k in range(1, k_hi):
        err = max(_dist_to_int(k * w) for w in omega)
        if err <= bound + 1e-15:
            return k, err
    # Dirichlet guarantees a solution with 1 <= k < K; reaching here means
    # K was not > 1 in exact arithmetic terms
    raise RuntimeError("Dirichlet scan failed; K too close to 1")


def rational_period(omega, K_max=1000, tol=1e-9):
    """Minimal T <= K_max with dist(T*omega, Z^n) <= tol, or None.

    Integer candidates are scanned first; the winner is then divided by the
    gcd of the integer vector it produces, which recovers non-integer
    minimal periods such as T = 1/2 for omega = (2, 4).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    for T in range(1, int(K_max) + 1):
        v = T * omega
        if max(_dist_to_int(w) for w in v) <= tol:
            kvec = np.rint(v).astype(int)
            g = 0
            for entry in kvec:
                g = math.gcd(g, abs(int(entry)))
            if g > 1:
                T0 = T / g
                if max(_dist_to_int(w) for w in T0 * omega) <= tol:
                    return T0
            return float(T)
    return None


# ---------------------------------------------------------------------------
# unimodular frames


@dataclass(frozen=True)
class ResonanceFrame:
    """Unimodular integer frame with designated resonance columns.

    ``I`` carries k (and k') as its leading columns; ``I_inv`` is the exact
    integer inverse.  Rotations q = I^t x, p = I^(-1) y are symplectic.
    """
    k: tuple
    I: tuple                       # rows of ints
    I_inv: tuple
    k_prime: tuple = None

    @property
    def n(self):
        return len(self.k)

    def matrix(self):
        return np.array(self.I, dtype=int)

    def inverse(self):
        return np.array(self.I_inv, dtype=int)

    def det(self):
        return _int_det([list(r) for r in self.I])

    def to_dict(self):
        d = {"k": list(self.k), "I": [list(r) for r in self.I],
             "I_inv": [list(r) for r in self.I_inv]}
        if self.k_prime is not None:
            d["k_prime"] = list(self.k_prime)
        return d


def _int_det(M):
    M = [row[:] for row in M]
    n = len(M)
    if n == 1:
        return M[0][0]
    # fraction-free Gaussian elimination (Bareiss)
    sign = 1
    prev = 1
    for i in range(n - 1):
        if M[i][i] == 0:
            for r in range(i + 1, n):
                if M[r][i] != 0:
                    M[i], M[r] = M[r], M[i]
                    sign = -sign
                    break
            else:
                return 0
        for r in range(i + 1, n):
            for c in range(i + 1, n):
                M[r][c] = (M[r][c] * M[i][i] - M[r][i] * M[i][c]) // prev
            M[r][i] = 0
        prev = M[i][i]
    return sign * M[n - 1][n - 1]


def _int_inverse_unimodular(M):
    """Exact inverse of an integer matrix with det +-1 (adjugate method)."""
    n = len(M)
    d = _int_det(M)
    if d not in (1, -1):
        raise ValueError("matrix is not unimodular")
    inv = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[M[r][c] for c in range(n) if c != i]
                     for r in range(n) if r != j]
            cof = _int_det(minor) if n > 1 else 1
            inv[i][j] = d * ((-1) ** (i + j)) * cof
    return inv


def _column_reduction(k):
    """Unimodular U (list of rows) with U @ k = (g, 0, ..., 0), g = gcd."""
    v = [int(x) for x in k]
    n = len(v)
    U = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    for i in range(1, n):
        a, b = v[0], v[i]
        if b == 0:
            continue
        g, s, t = _xgcd(a, b)
        # rows: r0 <- s r0 + t ri ; ri <- -(b/g) r0 + (a/g) ri  (det = 1)
        p, q = -(b // g), a // g
        r0 = [s * U[0][c] + t * U[i][c] for c in range(n)]
        ri = [p * U[0][c] + q * U[i][c] for c in range(n)]
        U[0], U[i] = r0, ri
        v[0], v[i] = g, 0
    return U, v[0]


def _xgcd(a, b):
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def _complete_single(k):
    """Unimodular integer matrix with first column k (k indivisible)."""
    U, g = _column_reduction(k)
    if abs(g) != 1:
        raise ValueError(f"vector {tuple(k)} is divisible (gcd {abs(g)})")
    Iinv_first = U if g == 1 else [[-u for u in row] for row in U]
    return _int_inverse_unimodular(Iinv_first)


def unimodular_complete(k, k_prime=None, search_radius=3):
    """Complete k (and optionally k') to a unimodular frame.

    The given vectors become the leading columns; the remaining columns are
    reduced modulo the designated ones over a bounded integer search to
    minimize their sup norm (ties broken lexicographically).

    Raises
    ------
    ValueError
        If k is divisible, or (k, k') is not extendable (the gcd of their
        2x2 minors differs from 1).
    """
    k = [int(v) for v in k]
    n = len(k)
    if k_prime is None:
        M = _complete_single(k)
        designated = [k]
    else:
        kp = [int(v) for v in k_prime]
        minors = []
        for a in range(n):
            for b in range(a + 1, n):
                minors.append(k[a] * kp[b] - k[b] * kp[a])
        g = 0
        for m in minors:
            g = math.gcd(g, abs(m))
        if g != 1:
            raise ValueError(f"pair not extendable: minor gcd {g}")
        A = _complete_single(k)           # first column k
        Ainv = _int_inverse_unimodular(A)
        v = [sum(Ainv[r][c] * kp[c] for c in range(n)) for r in range(n)]
        # complete (e1, v): reduce to completing v[1:] in dimension n-1
        sub = _complete_single(v[1:])
        N = [[0] * n for _ in range(n)]
        N[0][0] = 1
        N[0][1] = v[0]
        for r in range(1, n):
            N[r][1] = sub[r - 1][0]
            for c in range(2, n):
                N[r][c] = sub[r - 1][c - 1]
        M = _mat_mul_int(A, N)
        designated = [k, kp]

    M = _reduce_free_columns(M, len(designated), search_radius)
    det = _int_det(M)
    assert det in (1, -1)
    inv = _int_inverse_unimodular(M)
    return ResonanceFrame(k=tuple(k),
                          k_prime=tuple(k_prime) if k_prime is not None else None,
                          I=tuple(tuple(r) for r in M),
                          I_inv=tuple(tuple(r) for r in inv))


def _mat_mul_int(A, B):
    n = len(A)
    return [[sum(A[r][j] * B[j][c] for j in range(n)) for c in range(n)]
            for r in range(n)]


def _reduce_free_columns(M, n_designated, radius):
    n = len(M)
    cols = [[M[r][c] for r in range(n)] for c in range(n)]
    def _key(v):
        return (max(abs(x) for x in v), sum(abs(x) for x in v),
                tuple(abs(x) for x in v), tuple(v))

    for c in range(n_designated, n):
        best = cols[c]
        best_key = _key(best)
        shifts = [range(-radius, radius + 1)] * n_designated
        for combo in _iproduct(*shifts):
            cand = cols[c][:]
            for d, a in enumerate(combo):
                for r in range(n):
                    cand[r] += a * cols[d][r]
            key = _key(cand)
            if key < best_key:
                best, best_key = cand, key
        cols[c] = best
    return [[cols[c][r] for c in range(n)] for r in range(n)]


# ---------------------------------------------------------------------------
# resonant projection


def resonant_project(P: FourierTaylorSeries, omega, period=None):
    """Time average of P along the linear flow of a rational frequency.

    Keeps exactly the modes with <k, omega> = 0; the test is exact, so the
    frequency must be given as Fractions (or ints).  Equals
    (1/T) int_0^T P(x + omega t, y) dt for trig-polynomials.
    """
    om = [Fraction(w) if not isinstance(w, Fraction) else w for w in omega]
    kept = {}
    for (k, i), c in P.coeffs.items():
        s = sum(Fraction(kk) * w for kk, w in zip(k, om))
        if s == 0:
            kept[(k, i)] = c
    return FourierTaylorSeries(P.dim_angle, P.dim_action, kept, P.base_point,
                               P.cutoff_K, P.cutoff_d)


# ---------------------------------------------------------------------------
# resonant paths on an energy surface


class ConvexHamiltonian:
    """Integrable convex h(y) with gradient and Hessian callables."""

    def __init__(self, value, grad, hess):
        self.value = value
        self.grad = grad
        self.hess = hess

    @classmethod
    def quadratic(cls, A):
        A = np.asarray(A, dtype=float)
        return cls(lambda y: 0.5 * y @ A @ y, lambda y: A @ y, lambda y: A)


@dataclass
class ResonantPath:
    segments: list                 # {"k": tuple, "arc": ndarray}
    delta: float
    K_delta: int
    junctions: list = dc_field(default_factory=list)

    def points(self):
        return np.vstack([seg["arc"] for seg in self.segments])

    def to_dict(self):
        return {
            "delta": self.delta,
            "K_delta": self.K_delta,
            "segments": [{"k": list(s["k"]), "arc": np.asarray(s["arc"]).tolist()}
                         for s in self.segments],
            "junctions": [{"k": list(j["k"]), "k_prime": list(j["k_prime"]),
                           "y": list(j["y"]), "residual": j["residual"]}
                          for j in self.junctions],
        }


def _project_to_arc(h, E, k, y0, tol=1e-12, max_iter=60):
    """Newton projection onto {<k, grad h> = 0} cap {h = E}."""
    y = np.asarray(y0, dtype=float).copy()
    k = np.asarray(k, dtype=float)
    for _ in range(max_iter):
        g = np.array([k @ h.grad(y), h.value(y) - E])
        if np.max(np.abs(g)) <= tol:
            return y
        J = np.vstack([k @ h.hess(y), h.grad(y)])
        step, *_ = np.linalg.lstsq(J, -g, rcond=None)
        y = y + step
    raise RuntimeError(f"arc projection stalled, residual {np.max(np.abs(g)):.2e}")


def _arc_tangent(h, k, y):
    J = np.vstack([np.asarray(k, dtype=float) @ h.hess(y), h.grad(y)])
    _, _, Vt = np.linalg.svd(J)
    return Vt[-1]


def _trace_arc(h, E, k, y_start, y_end, step):
    """Predictor-corrector trace of the resonance arc from y_start to y_end."""
    pts = [y_start.copy()]
    y = y_start.copy()
    t_prev = _arc_tangent(h, k, y)
    if t_prev @ (y_end - y) < 0:
        t_prev = -t_prev
    max_steps = int(20 * np.pi / step) + 100
    for _ in range(max_steps):
        if np.linalg.norm(y - y_end) <= step:
            break
        t = _arc_tangent(h, k, y)
        if t @ t_prev < 0:
            t = -t
        y = _project_to_arc(h, E, k, y + step * t)
        pts.append(y.copy())
        t_prev = t
    pts.append(y_end.copy())
    return np.array(pts)


def _double_resonance_junction(h, E, k, kp, y0, tol=1e-10, max_iter=80):
    y = np.asarray(y0, dtype=float).copy()
    k = np.asarray(k, dtype=float)
    kp = np.asarray(kp, dtype=float)
    for _ in range(max_iter):
        g = np.array([k @ h.grad(y), kp @ h.grad(y), h.value(y) - E])
        if np.max(np.abs(g)) <= tol:
            return y, float(np.max(np.abs(g)))
        J = np.vstack([k @ h.hess(y), kp @ h.hess(y), h.grad(y)])
        step, *_ = np.linalg.lstsq(J, -g, rcond=None)
        if np.linalg.norm(step) > 1.0:
            step = step / np.linalg.norm(step)
        y = y + step
    return y, float(np.max(np.abs(g)))


def _freq_residual(h, k, y):
    k = np.asarray(k, dtype=float)
    return abs(k @ h.grad(y)) / np.linalg.norm(k)


def _candidate_vectors(n, K):
    seen = set()
    rngs = [range(-K, K + 1)] * n
    for k in _iproduct(*rngs):
        if all(v == 0 for v in k):
            continue
        g = 0
        for v in k:
            g = math.gcd(g, abs(v))
        kk = tuple(v // g for v in k)
        if kk in seen or tuple(-v for v in kk) in seen:
            continue
        seen.add(kk)
        yield kk


def build_resonant_path(h, E, waypoints, delta, K_search=8):
    """Piecewise resonant path on h^-1(E) through the given waypoints.

    For each consecutive waypoint pair an integer vector k (||k||_inf as
    small as possible, bounded by K_search) is selected whose resonance arc
    Gamma_k passes within delta (frequency metric) of both; arcs are traced
    by predictor-corrector with step delta/4 and joined at double-resonance
    junctions solved by Newton.

    Raises
    ------
    ValueError
        If some waypoint pair is unreachable at ||k||_inf <= K_search.
    """
    waypoints = [np.asarray(w, dtype=float) for w in waypoints]
    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    ks = []
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        best = None
        for K in range(1, K_search + 1):
            for k in _candidate_vectors(len(a), K):
                if max(abs(v) for v in k) < K and K > 1:
                    continue  # already tried at smaller radius
                r = max(_freq_residual(h, k, a), _freq_residual(h, k, b))
                if r <= delta and (best is None or r < best[1]):
                    best = (k, r)
            if best is not None:
                break
        if best is None:
            raise ValueError(
                f"no resonance ||k||_inf <= {K_search} passes within delta of "
                f"waypoints {a} and {b}; increase K_delta")
        ks.append(best[0])

    K_delta = max(max(abs(v) for v in k) for k in ks)
    junctions = []
    nodes = [_project_to_arc(h, E, ks[0], waypoints[0])]
    for i in range(len(ks) - 1):
        yj, res = _double_resonance_junction(h, E, ks[i], ks[i + 1], waypoints[i + 1])
        junctions.append({"k": ks[i], "k_prime": ks[i + 1], "y": yj, "residual": res})
        nodes.append(yj)
    nodes.append(_project_to_arc(h, E, ks[-1], waypoints[-1]))

    segments = []
    step = delta / 4.0
    for i, k in enumerate(ks):
        arc = _trace_arc(h, E, k, nodes[i], nodes[i + 1], step)
        # corrector polish so invariants hold on every emitted point
        arc = np.array([_project_to_arc(h, E, k, p) for p in arc])
        segments.append({"k": k, "arc": arc})
    return ResonantPath(segments=segments, delta=delta, K_delta=K_delta,
                        junctions=junctions)


# ---------------------------------------------------------------------------
# strong/weak double-resonance classifier


def classify_resonance(Z_k, k_prime, P_norm, r, d=1.0, d1=None, grid=4096):
    """Strong/weak verdict for a double resonance.

    ``Z_k`` is the single-resonance averaged potential as a callable on the
    circle (or FourierTaylorSeries in one angle).  The maximum must be
    non-degenerate (second derivative <= -lambda < 0), otherwise the
    classification is refused.  Weak iff ||k'||^(r-2) >= (d/d1) * P_norm,
    with the conservative tie going to strong.
    """
    if isinstance(Z_k, FourierTaylorSeries):
        f = lambda s: Z_k(np.array([s]), Z_k.base_point)
    else:
        f = Z_k
    xs = np.linspace(0, 2 * np.pi, grid, endpoint=False)
    vals = np.array([f(s) for s in xs])
    i0 = int(np.argmax(vals))
    x0 = xs[i0]
    hgrid = xs[1] - xs[0]
    # quadratic refinement of the max and curvature by central differences
    for _ in range(40):
        h = 1e-4
        d1f = (f(x0 + h) - f(x0 - h)) / (2 * h)
        d2f = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / h ** 2
        if abs(d2f) < 1e-14:
            break
        x_new = x0 - d1f / d2f
        if abs(x_new - x0) < 1e-12:
            x0 = x_new
            break
        x0 = x_new
    h = 1e-4
    d2f = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / h ** 2
    lam = -d2f
    if lam <= 1e-10:
        raise ValueError(f"degenerate maximum of Z_k (curvature {d2f:.2e}); "
                         "classification refused")
    if d1 is None:
        d1 = lam / 4.0
    kp_norm = float(np.linalg.norm(np.asarray(k_prime, dtype=float)))
    lhs = kp_norm ** (r - 2)
    rhs = (d / d1) * P_norm
    margin = lhs / rhs if rhs > 0 else np.inf
    # conservative tie-break: margin within rounding of 1 counts as strong
    verdict = "weak" if margin > 1.0 + 1e-9 else "strong"
    return {"verdict": verdict, "margin": float(margin), "lambda": float(lam),
            "max_location": float(x0 % (2 * np.pi)), "d": d, "d1": d1}


# ---------------------------------------------------------------------------
# covering


def cover_path(path, epsilon, sigma, K=1.0, h=None, K_rational=50, tol=1e-9):
    """Ball cover of a resonant path with spacing 2*K*sqrt(eps).

    Centers are path points with pairwise distance >= K*sqrt(eps); balls of
    radius 2*K*sqrt(eps) cover the path together with its K*sqrt(eps)
    neighborhood.  Each ball carries rational frequency data for its center
    when ``h`` is supplied.
    """
    if sigma >= 1.0 / 6.0:
        raise ValueError("covering requires sigma < 1/6")
    pts = path.points() if isinstance(path, ResonantPath) else np.asarray(path, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    r_sep = K * math.sqrt(epsilon)
    spacing = 2.0 * r_sep
    centers = [pts[0]]
    acc = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        seg = np.linalg.norm(b - a)
        acc += seg
        if acc >= spacing:
            centers.append(b)
            acc = 0.0
    if np.linalg.norm(pts[-1] - centers[-1]) > 0.5 * spacing:
        centers.append(pts[-1])
    balls = []
    for cpt in centers:
        ball = {"center": cpt, "radius": 2.0 * r_sep}
        if h is not None:
            om = h.grad(cpt)
            T = rational_period(om, K_max=K_rational, tol=1e-3)
            if T is not None:
                kvec = np.rint(T * om).astype(int)
                ball["frequency"] = {"omega": om.tolist(), "period": T,
                                     "k": kvec.tolist()}
            else:
                kk, err = dirichlet_approx(om, K_rational)
                ball["frequency"] = {"omega": om.tolist(), "dirichlet_k": kk,
                                     "err": err}
        balls.append(ball)
    return balls
