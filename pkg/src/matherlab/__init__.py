"""matherlab: desk-scale Aubry-Mather / weak-KAM / normal-form computations
for nearly integrable Tonelli Hamiltonian systems."""

__version__ = "0.1.0"

from . import _kernels  # noqa: F401  (selects compiled vs numpy backend)
