"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

At import time the Cython extension ``_minplus`` is preferred; if it is not
built, the numpy implementation ``_minplus_py`` is used with identical
semantics.  ``HAVE_COMPILED`` reports which one is active;
``implementations()`` exposes both for benchmarks and cross-checks.
"""

from . import _minplus_py

try:
    from . import _minplus as _impl

    HAVE_COMPILED = True
except ImportError:  # extension not built
    _impl = _minplus_py
    HAVE_COMPILED = False

minplus_matmul = _impl.minplus_matmul
minplus_matmul_argmin = _impl.minplus_matmul_argmin
sweep_backward = _impl.sweep_backward
sweep_backward_argmin = _impl.sweep_backward_argmin
sweep_forward = _impl.sweep_forward
karp_mean = _impl.karp_mean
sweep_local2d = _impl.sweep_local2d


def implementations():
    """Name -> module map of available kernel implementations."""
    impls = {"numpy": _minplus_py}
    if HAVE_COMPILED:
        impls["compiled"] = _impl
    return impls
