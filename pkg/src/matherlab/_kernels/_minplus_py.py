"""Pure-numpy implementations of the min-plus kernels.

Same contracts as the compiled module ``_minplus``; used as the fallback
when the extension is not built.  All matrices are float64 and C-ordered.
"""
import numpy as np

# Row-block size for the chunked matmul; bounds the broadcast buffer
# (block * n * n doubles) so large grids do not blow up memory.
_BLOCK = 16


def minplus_matmul(A, B):
    """C[i, j] = min_k A[i, k] + B[k, j]."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    n, m = A.shape
    _, p = B.shape
    C = np.empty((n, p))
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        C[i0:i1] = np.min(A[i0:i1, :, None] + B[None, :, :], axis=1)
    return C


def minplus_matmul_argmin(A, B):
    """As ``minplus_matmul`` but also returns the argmin index k for each (i, j)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    n = A.shape[0]
    p = B.shape[1]
    C = np.empty((n, p))
    arg = np.empty((n, p), dtype=np.int32)
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        S = A[i0:i1, :, None] + B[None, :, :]
        arg[i0:i1] = np.argmin(S, axis=1)
        C[i0:i1] = np.take_along_axis(S, arg[i0:i1, None, :].astype(np.intp), axis=1)[:, 0, :]
    return C, arg


def sweep_backward(K, u):
    """Backward Lax-Oleinik sweep: v[j] = min_i u[i] + K[i, j]."""
    return np.min(np.asarray(u)[:, None] + K, axis=0)


def sweep_backward_argmin(K, u):
    S = np.asarray(u)[:, None] + K
    arg = np.argmin(S, axis=0)
    return S[arg, np.arange(S.shape[1])], arg.astype(np.int32)


def sweep_forward(K, u):
    """Forward sweep: v[i] = max_j u[j] - K[i, j]."""
    return np.max(np.asarray(u)[None, :] - K, axis=1)


def karp_mean(K):
    """Minimum cycle mean of the complete digraph with weights K[i, j].

    Karp's algorithm with source 0; exact up to floating-point rounding.
    """
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    D = np.full((n + 1, n), np.inf)
    D[0, 0] = 0.0
    for k in range(n):
        D[k + 1] = np.min(D[k][:, None] + K, axis=0)
    num = D[n][None, :] - D[:n]
    den = (n - np.arange(n, dtype=np.float64))[:, None]
    with np.errstate(invalid="ignore"):
        ratios = num / den
    ratios = np.where(np.isnan(ratios), -np.inf, ratios)
    return float(np.min(np.max(ratios, axis=0)))


def sweep_local2d(u, W, off):
    """Windowed backward sweep on a periodic 2-d grid.

    v[x'] = min_o  u[x' - off[o]] + W[o, x' - off[o]]

    Parameters
    ----------
    u : (n1, n2) array
    W : (n_off, n1, n2) array of per-site step costs
    off : (n_off, 2) int array of index displacements
    """
    u = np.asarray(u)
    out = np.full_like(u, np.inf)
    for o in range(off.shape[0]):
        di, dj = int(off[o, 0]), int(off[o, 1])
        cand = np.roll(u + W[o], shift=(di, dj), axis=(0, 1))
        np.minimum(out, cand, out=out)
    return out
