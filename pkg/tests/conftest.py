import numpy as np
import pytest

from vesseltree import _kernels
from vesseltree.mask_io import VesselMask


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # first calls JIT-compile on the numba backend; timing-sensitive
    # tests must see the steady state
    m = np.zeros((8, 8), dtype=np.uint8)
    m[2:6, 2:6] = 1
    _kernels.thin_mask(m)
    _kernels.edt(m)
    g = np.zeros((8, 8), dtype=np.uint8)
    _kernels.stamp_disks(g, np.array([4.0]), np.array([4.0]), np.array([1.5]))
    _kernels.convolve7(np.zeros((14, 14)), np.full((7, 7), 1.0 / 49.0))


def make_mask(rows):
    """Build a VesselMask from an iterable of 0/1 rows or a 2-D array."""
    return VesselMask(np.asarray(rows, dtype=np.uint8))


@pytest.fixture
def line_mask():
    """Horizontal 1-px line of 101 foreground pixels in a 512x512 canvas."""
    px = np.zeros((512, 512), dtype=np.uint8)
    px[256, 200:301] = 1
    return VesselMask(px)
