"""Kernel backend selection.

The raster-heavy inner loops (thinning, distance transform, disk
stamping, 7x7 convolution) exist twice: a numba @njit build and a pure
numpy build. ``VESSELTREE_BACKEND`` picks one:

  auto   use numba when importable, else numpy (default)
  numba  require numba, fail if missing
  numpy  force the numpy path

Both builds are bit-for-bit equivalent; the numpy path exists for
environments without a working JIT and as the reference in
``benchmarks/bench_kernels.py``.
"""

import os

ENV_VAR = "VESSELTREE_BACKEND"
_VALID = ("auto", "numba", "numpy")


def resolve_backend(choice=None):
    """Return 'numba' or 'numpy' for a requested backend name."""
    if choice is None:
        choice = os.environ.get(ENV_VAR, "auto")
    choice = choice.strip().lower()
    if choice not in _VALID:
        raise ValueError(f"{ENV_VAR} must be one of {_VALID}, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = resolve_backend()
