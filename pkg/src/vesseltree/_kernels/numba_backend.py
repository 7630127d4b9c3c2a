"""Numba @njit builds of the hot kernels.

Must stay bit-identical to ``numpy_backend``: no fastmath, and float
accumulation orders mirror the numpy reference.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def thin_mask(mask):
    # two-subiteration parallel thinning, Guo-Hall deletion conditions
    h, w = mask.shape
    img = np.zeros((h + 2, w + 2), dtype=np.uint8)
    for r in range(h):
        for c in range(w):
            if mask[r, c] != 0:
                img[r + 1, c + 1] = 1
    flags = np.zeros((h + 2, w + 2), dtype=np.uint8)
    while True:
        changed = False
        for step in range(2):
            ndel = 0
            for r in range(1, h + 1):
                for c in range(1, w + 1):
                    if img[r, c] == 0:
                        continue
                    b2 = img[r - 1, c] == 1
                    b3 = img[r - 1, c + 1] == 1
                    b4 = img[r, c + 1] == 1
                    b5 = img[r + 1, c + 1] == 1
                    b6 = img[r + 1, c] == 1
                    b7 = img[r + 1, c - 1] == 1
                    b8 = img[r, c - 1] == 1
                    b9 = img[r - 1, c - 1] == 1
                    cnum = 0
                    if (not b2) and (b3 or b4):
                        cnum += 1
                    if (not b4) and (b5 or b6):
                        cnum += 1
                    if (not b6) and (b7 or b8):
                        cnum += 1
                    if (not b8) and (b9 or b2):
                        cnum += 1
                    if cnum != 1:
                        continue
                    n1 = 0
                    if b9 or b2:
                        n1 += 1
                    if b3 or b4:
                        n1 += 1
                    if b5 or b6:
                        n1 += 1
                    if b7 or b8:
                        n1 += 1
                    n2 = 0
                    if b2 or b3:
                        n2 += 1
                    if b4 or b5:
                        n2 += 1
                    if b6 or b7:
                        n2 += 1
                    if b8 or b9:
                        n2 += 1
                    n = n1 if n1 < n2 else n2
                    if n < 2 or n > 3:
                        continue
                    if step == 0:
                        if (b6 or b7 or (not b9)) and b8:
                            continue
                    else:
                        if (b2 or b3 or (not b5)) and b4:
                            continue
                    flags[r, c] = 1
                    ndel += 1
            if ndel > 0:
                changed = True
                for r in range(1, h + 1):
                    for c in range(1, w + 1):
                        if flags[r, c] != 0:
                            img[r, c] = 0
                            flags[r, c] = 0
        if not changed:
            break
    return img[1 : h + 1, 1 : w + 1].copy()


@njit(cache=True)
def edt(mask):
    # Meijster's two-phase exact squared EDT in integer arithmetic,
    # square-rooted at the end.
    h, w = mask.shape
    inf = h + w
    g = np.empty((h, w), dtype=np.int64)
    for c in range(w):
        g[0, c] = 0 if mask[0, c] == 0 else inf
        for r in range(1, h):
            if mask[r, c] == 0:
                g[r, c] = 0
            else:
                v = g[r - 1, c] + 1
                g[r, c] = v if v < inf else inf
        for r in range(h - 2, -1, -1):
            if g[r + 1, c] + 1 < g[r, c]:
                g[r, c] = g[r + 1, c] + 1
    out = np.zeros((h, w), dtype=np.float64)
    s = np.empty(w, dtype=np.int64)
    t = np.empty(w, dtype=np.int64)
    for r in range(h):
        q = 0
        s[0] = 0
        t[0] = 0
        for u in range(1, w):
            while q >= 0:
                da = t[q] - s[q]
                db = t[q] - u
                if da * da + g[r, s[q]] * g[r, s[q]] > db * db + g[r, u] * g[r, u]:
                    q -= 1
                else:
                    break
            if q < 0:
                q = 0
                s[0] = u
            else:
                sep = (
                    u * u - s[q] * s[q] + g[r, u] * g[r, u]
                    - g[r, s[q]] * g[r, s[q]]
                ) // (2 * (u - s[q]))
                ww = 1 + sep
                if ww < w:
                    q += 1
                    s[q] = u
                    t[q] = ww
        for u in range(w - 1, -1, -1):
            d = u - s[q]
            out[r, u] = math.sqrt(float(d * d + g[r, s[q]] * g[r, s[q]]))
            if u == t[q]:
                q -= 1
    return out


@njit(cache=True)
def stamp_disks(grid, xs, ys, rs):
    h, w = grid.shape
    for k in range(xs.shape[0]):
        x = xs[k]
        y = ys[k]
        rad = rs[k]
        ix = int(math.floor(x + 0.5))
        iy = int(math.floor(y + 0.5))
        if 0 <= iy < h and 0 <= ix < w:
            grid[iy, ix] = 1
        if rad <= 0.0:
            continue
        y0 = int(math.ceil(y - rad))
        y1 = int(math.floor(y + rad))
        x0 = int(math.ceil(x - rad))
        x1 = int(math.floor(x + rad))
        if y0 < 0:
            y0 = 0
        if x0 < 0:
            x0 = 0
        if y1 > h - 1:
            y1 = h - 1
        if x1 > w - 1:
            x1 = w - 1
        r2 = rad * rad
        for j in range(y0, y1 + 1):
            dy = float(j) - y
            dy2 = dy * dy
            for i in range(x0, x1 + 1):
                dx = float(i) - x
                if dy2 + dx * dx <= r2:
                    grid[j, i] = 1


@njit(cache=True)
def convolve7(padded, kern):
    h = padded.shape[0] - 6
    w = padded.shape[1] - 6
    out = np.zeros((h, w), dtype=np.float64)
    for a in range(7):
        for b in range(7):
            kv = kern[a, b]
            for j in range(h):
                for i in range(w):
                    out[j, i] = out[j, i] + padded[j + a, i + b] * kv
    return out
