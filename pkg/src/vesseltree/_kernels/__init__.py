"""Hot raster kernels with selectable backend.

Four kernels dominate pipeline runtime on 512x512 masks: iterative
thinning, the exact Euclidean distance transform, disk stamping for the
variable-radius render, and the 7x7 Gaussian convolution. Each exists
as a numba @njit build and a pure numpy build producing bit-identical
results; ``VESSELTREE_BACKEND`` selects the active one at import time.
"""

from vesseltree._backend import BACKEND, resolve_backend


def load_backend(name):
    """Import and return the kernel module for 'numba' or 'numpy'."""
    resolved = resolve_backend(name)
    if resolved == "numba":
        from vesseltree._kernels import numba_backend

        return numba_backend
    from vesseltree._kernels import numpy_backend

    return numpy_backend


_active = load_backend(BACKEND)

thin_mask = _active.thin_mask
edt = _active.edt
stamp_disks = _active.stamp_disks
convolve7 = _active.convolve7

__all__ = [
    "BACKEND",
    "load_backend",
    "thin_mask",
    "edt",
    "stamp_disks",
    "convolve7",
]
