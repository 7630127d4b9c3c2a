"""The numba and numpy kernel builds must agree bit-for-bit."""

import numpy as np
import pytest

from vesseltree._backend import resolve_backend
from vesseltree._kernels import load_backend
from vesseltree.hint import GAUSS_KERNEL


def _both():
    try:
        nb = load_backend("numba")
    except ImportError:
        pytest.skip("numba not importable")
    return nb, load_backend("numpy")


def test_resolve_backend_values():
    assert resolve_backend("numpy") == "numpy"
    assert resolve_backend("auto") in ("numba", "numpy")
    with pytest.raises(ValueError):
        resolve_backend("cuda")


@pytest.mark.parametrize("seed", range(6))
def test_thinning_bit_equal(seed):
    nb, npy = _both()
    rng = np.random.default_rng(seed)
    m = (rng.random((60, 60)) < rng.uniform(0.3, 0.8)).astype(np.uint8)
    assert np.array_equal(nb.thin_mask(m), npy.thin_mask(m))


@pytest.mark.parametrize("seed", range(6))
def test_edt_bit_equal(seed):
    nb, npy = _both()
    rng = np.random.default_rng(seed)
    m = (rng.random((48, 64)) < 0.6).astype(np.uint8)
    if m.all() or not m.any():
        pytest.skip("degenerate draw")
    assert np.array_equal(nb.edt(m), npy.edt(m))


def test_stamp_bit_equal():
    nb, npy = _both()
    rng = np.random.default_rng(3)
    xs = rng.uniform(-2, 66, 200)
    ys = rng.uniform(-2, 66, 200)
    rs = rng.uniform(0.0, 6.0, 200)
    g1 = np.zeros((64, 64), dtype=np.uint8)
    g2 = np.zeros((64, 64), dtype=np.uint8)
    nb.stamp_disks(g1, xs, ys, rs)
    npy.stamp_disks(g2, xs, ys, rs)
    assert np.array_equal(g1, g2)


def test_convolve_bit_equal():
    nb, npy = _both()
    rng = np.random.default_rng(4)
    padded = np.pad(rng.random((50, 70)), 3, mode="reflect")
    assert np.array_equal(nb.convolve7(padded, GAUSS_KERNEL),
                          npy.convolve7(padded, GAUSS_KERNEL))
