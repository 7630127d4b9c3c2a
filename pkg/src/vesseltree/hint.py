"""Three-channel conditioning hint rasterization.

Channel 0 is the radius field normalized to [0, 1] by its own maximum.
Channel 1 renders each segment as a union of filled disks: the curve is
sampled max(20, ceil(2 * chord)) times and each sample stamps a disk
whose radius is the field value at the nearest pixel (binary coverage).
Channel 2 smooths channel 1 with a normalized 7x7 Gaussian, sigma 2.0,
reflect padding. The stack is rescaled to [-1, 1].

Tortuosity and arc-drop configurations never touch the field, so their
channel 0 is bit-identical to baseline by construction.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from vesseltree import _kernels, bezier

HINT_RESOLUTION = 512
GAUSS_SIZE = 7
GAUSS_SIGMA = 2.0

_BTEF_MAGIC = b"BTEF"
_META_MAGIC = b"META"


def _gauss_kernel():
    i = np.arange(GAUSS_SIZE, dtype=np.float64) - (GAUSS_SIZE - 1) / 2.0
    w = np.exp(-(i * i) / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA))
    k = np.outer(w, w)
    return k / k.sum()


GAUSS_KERNEL = _gauss_kernel()
GAUSS_KERNEL.flags.writeable = False


@dataclass(frozen=True)
class HintImage:
    """(3, 512, 512) float32 stack with values in [-1, 1]."""

    channels: np.ndarray

    def __post_init__(self):
        ch = np.ascontiguousarray(np.asarray(self.channels, dtype=np.float32))
        if ch.shape != (3, HINT_RESOLUTION, HINT_RESOLUTION):
            raise ValueError(
                f"hint must be (3, {HINT_RESOLUTION}, {HINT_RESOLUTION}), got {ch.shape}"
            )
        if float(ch.min()) < -1.0 or float(ch.max()) > 1.0:
            raise ValueError("hint values must lie in [-1, 1]")
        ch.flags.writeable = False
        object.__setattr__(self, "channels", ch)

    @property
    def width(self):
        return self.channels.shape[2]

    @property
    def height(self):
        return self.channels.shape[1]


def render_channel0(field):
    """Radius field normalized by its maximum (all-zero stays all-zero)."""
    v = field.values
    m = float(v.max())
    if m <= 0:
        return np.zeros_like(v)
    return v / m


def segment_sample_count(chord):
    """Samples per segment: twice the chord length, floored at 20."""
    return max(20, int(np.ceil(2.0 * chord)))


def render_channel1(tree, field):
    """Variable-radius binary render of every segment onto the field grid."""
    h, w = field.values.shape
    grid = np.zeros((h, w), dtype=np.uint8)
    if len(tree) == 0:
        return grid.astype(np.float64)
    if tuple(tree.source_dims) != (w, h):
        raise ValueError(
            f"tree canvas {tree.source_dims} does not match field {w}x{h}"
        )
    xs, ys, rs = [], [], []
    for seg in tree.segments:
        n = segment_sample_count(bezier.chord_length(seg.ctrl))
        pts = bezier.eval_bezier(seg.ctrl, np.linspace(0.0, 1.0, n))
        ix = np.floor(pts[:, 0] + 0.5).astype(np.int64)
        iy = np.floor(pts[:, 1] + 0.5).astype(np.int64)
        inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        radii = np.zeros(n, dtype=np.float64)
        radii[inside] = field.values[iy[inside], ix[inside]]
        xs.append(pts[:, 0])
        ys.append(pts[:, 1])
        rs.append(radii)
    _kernels.stamp_disks(
        grid,
        np.ascontiguousarray(np.concatenate(xs)),
        np.ascontiguousarray(np.concatenate(ys)),
        np.ascontiguousarray(np.concatenate(rs)),
    )
    return grid.astype(np.float64)


def gaussian_smooth(grid):
    """Normalized 7x7 Gaussian (sigma 2.0), mirror padding at borders."""
    padded = np.pad(np.asarray(grid, dtype=np.float64), GAUSS_SIZE // 2, mode="reflect")
    return _kernels.convolve7(padded, GAUSS_KERNEL)


def assemble_hint(ch0, ch1, ch2):
    """Stack three [0, 1] grids and rescale values to [-1, 1]."""
    chans = []
    for name, ch in (("channel 0", ch0), ("channel 1", ch1), ("channel 2", ch2)):
        ch = np.asarray(ch, dtype=np.float64)
        if ch.shape != (HINT_RESOLUTION, HINT_RESOLUTION):
            raise ValueError(
                f"{name} must be {HINT_RESOLUTION}x{HINT_RESOLUTION}, got {ch.shape}"
            )
        if float(ch.min()) < -1e-9 or float(ch.max()) > 1.0 + 1e-9:
            raise ValueError(f"{name} values must lie in [0, 1]")
        chans.append(np.clip(ch, 0.0, 1.0))
    stack = np.stack(chans)
    return HintImage((2.0 * stack - 1.0).astype(np.float32))


def make_hint(tree, field):
    """Full hint for one (tree, field) pair."""
    ch0 = render_channel0(field)
    ch1 = render_channel1(tree, field)
    ch2 = gaussian_smooth(ch1)
    return assemble_hint(ch0, ch1, ch2)


def channel0_invariance_report(a, b):
    """Absolute difference of channel-0 means, on the [0, 1] scale."""
    if a.channels.shape != b.channels.shape:
        raise ValueError("hint dimension mismatch")
    ca = (a.channels[0].astype(np.float64) + 1.0) / 2.0
    cb = (b.channels[0].astype(np.float64) + 1.0) / 2.0
    return abs(float(ca.mean()) - float(cb.mean()))


def write_hint_png(hint, path):
    """8-bit preview: [-1, 1] mapped to [0, 255], channels as RGB."""
    arr = hint.channels.astype(np.float64)
    img8 = np.clip(np.round((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    Image.fromarray(np.transpose(img8, (1, 2, 0)), mode="RGB").save(Path(path))
    return path


def write_btef(hint, path, metadata=None):
    """Bit-exact tensor format.

    Layout: magic ``BTEF``, little-endian u32 width, height, channels,
    then channel-major row-major float32 values. An optional trailing
    metadata block is ``META``, u32 byte length, UTF-8 ``key=value``
    lines.
    """
    ch = hint.channels
    payload = [
        _BTEF_MAGIC,
        struct.pack("<III", hint.width, hint.height, ch.shape[0]),
        np.ascontiguousarray(ch, dtype="<f4").tobytes(),
    ]
    if metadata:
        blob = "".join(f"{k}={v}\n" for k, v in sorted(metadata.items())).encode("utf-8")
        payload.append(_META_MAGIC)
        payload.append(struct.pack("<I", len(blob)))
        payload.append(blob)
    with open(path, "wb") as fh:
        fh.write(b"".join(payload))
    return path


def read_btef(path):
    """Parse a BTEF tensor; returns (HintImage, metadata dict)."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != _BTEF_MAGIC:
        raise ValueError(f"{path}: not a BTEF file")
    w, h, c = struct.unpack_from("<III", raw, 4)
    n = w * h * c
    if len(raw) < 16 + 4 * n:
        raise ValueError(f"{path}: truncated BTEF payload")
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=16).reshape(c, h, w)
    metadata = {}
    off = 16 + 4 * n
    if len(raw) >= off + 8 and raw[off : off + 4] == _META_MAGIC:
        (blob_len,) = struct.unpack_from("<I", raw, off + 4)
        blob = raw[off + 8 : off + 8 + blob_len].decode("utf-8")
        for line in blob.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                metadata[k] = v
    return HintImage(data.copy()), metadata
