"""Pure-numpy builds of the hot kernels.

These are the reference implementations: the numba builds in
``numba_backend.py`` must reproduce them bit-for-bit. Floating-point
expressions are therefore written so both backends perform the same
operations in the same order.
"""

import numpy as np
import scipy.ndimage


def thin_mask(mask):
    """Thin a binary mask to a 1-px skeleton.

    Two-subiteration parallel thinning (Guo-Hall conditions, 8-conn):
    deletions within a subpass are simultaneous, subpasses alternate
    until a full round deletes nothing. Unlike the classic two-subpass
    scheme it does not retract the tips of diagonal strokes. Returns
    uint8 {0,1}.
    """
    h, w = mask.shape
    img = np.zeros((h + 2, w + 2), dtype=np.uint8)
    img[1:-1, 1:-1] = mask != 0
    while True:
        changed = False
        for step in (0, 1):
            # ring order N, NE, E, SE, S, SW, W, NW
            b2 = img[:-2, 1:-1] == 1
            b3 = img[:-2, 2:] == 1
            b4 = img[1:-1, 2:] == 1
            b5 = img[2:, 2:] == 1
            b6 = img[2:, 1:-1] == 1
            b7 = img[2:, :-2] == 1
            b8 = img[1:-1, :-2] == 1
            b9 = img[:-2, :-2] == 1
            core = img[1:-1, 1:-1]
            c = (
                (~b2 & (b3 | b4)).astype(np.int32)
                + (~b4 & (b5 | b6))
                + (~b6 & (b7 | b8))
                + (~b8 & (b9 | b2))
            )
            n1 = (b9 | b2).astype(np.int32) + (b3 | b4) + (b5 | b6) + (b7 | b8)
            n2 = (b2 | b3).astype(np.int32) + (b4 | b5) + (b6 | b7) + (b8 | b9)
            n = np.minimum(n1, n2)
            if step == 0:
                m = (b6 | b7 | ~b9) & b8
            else:
                m = (b2 | b3 | ~b5) & b4
            cond = (core == 1) & (c == 1) & (n >= 2) & (n <= 3) & ~m
            if cond.any():
                core[cond] = 0
                changed = True
        if not changed:
            break
    return img[1:-1, 1:-1].copy()


def edt(mask):
    """Exact Euclidean distance from each foreground pixel to the nearest
    background pixel center; 0 on background. Requires >= 1 background pixel.
    """
    return scipy.ndimage.distance_transform_edt(mask != 0)


def stamp_disks(grid, xs, ys, rs):
    """Union filled disks into ``grid`` (uint8, mutated in place).

    Disk k is centered at (xs[k], ys[k]) with radius rs[k]; a pixel is
    covered when its center lies within the radius. The pixel nearest
    the disk center is always set so zero-radius samples still mark
    their trace.
    """
    h, w = grid.shape
    for k in range(len(xs)):
        x = float(xs[k])
        y = float(ys[k])
        rad = float(rs[k])
        ix = int(np.floor(x + 0.5))
        iy = int(np.floor(y + 0.5))
        if 0 <= iy < h and 0 <= ix < w:
            grid[iy, ix] = 1
        if rad <= 0.0:
            continue
        y0 = max(0, int(np.ceil(y - rad)))
        y1 = min(h - 1, int(np.floor(y + rad)))
        x0 = max(0, int(np.ceil(x - rad)))
        x1 = min(w - 1, int(np.floor(x + rad)))
        if y0 > y1 or x0 > x1:
            continue
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - y
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - x
        hit = dy[:, None] * dy[:, None] + dx[None, :] * dx[None, :] <= rad * rad
        sub = grid[y0 : y1 + 1, x0 : x1 + 1]
        sub[hit] = 1


def convolve7(padded, kern):
    """Valid-mode convolution of a (H+6, W+6) array with a 7x7 kernel.

    Taps accumulate in fixed row-major kernel order so the float
    rounding sequence matches the numba build exactly.
    """
    h = padded.shape[0] - 6
    w = padded.shape[1] - 6
    out = np.zeros((h, w), dtype=np.float64)
    for a in range(7):
        for b in range(7):
            out += padded[a : a + h, b : b + w] * kern[a, b]
    return out
