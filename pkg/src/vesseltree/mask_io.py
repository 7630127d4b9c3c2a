"""Binary vessel-mask I/O, resampling, degradation, and the radius field.

Masks are (H, W) uint8 grids with 1 = vessel foreground. The radius
field holds, per foreground pixel, the exact Euclidean distance to the
nearest background pixel center (a proxy for local half-caliber);
background pixels hold 0.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from vesseltree import _kernels
from vesseltree.errors import MaskError

WORKING_RESOLUTION = 512
LUMINANCE_THRESHOLD = 127

# distinct stream tag so pixel-drop draws never collide with other
# seeded operations deriving from the same user seed
_PIXEL_DROP_TAG = 0x70697864

_M64 = (1 << 64) - 1


def _as_seed_words(seed, tag):
    return [int(seed) & _M64, tag]


@dataclass(frozen=True)
class VesselMask:
    """Binary foreground/background raster. ``pixels`` is (H, W) uint8 {0,1}."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise MaskError("mask must be a non-empty 2-D grid")
        if px.dtype != np.uint8:
            px = px.astype(np.uint8)
        if not np.isin(px, (0, 1)).all():
            raise MaskError("mask cells must be exactly 0 or 1")
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def foreground_count(self):
        return int(self.pixels.sum())


@dataclass(frozen=True)
class RadiusField:
    """Per-pixel distance to the nearest background pixel center, 0 on background."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise MaskError("radius field must be a non-empty 2-D grid")
        if (v < 0).any():
            raise MaskError("radius field values must be non-negative")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


def load_mask(path):
    """Load an 8-bit grayscale or RGB raster as a binary mask.

    Pixels with luminance > 127 become foreground. RGB images are
    converted with the ITU-R 601 luma weights (Pillow mode ``L``).
    """
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as exc:
        raise MaskError(f"cannot read image {path}: {exc}") from exc
    if img.width == 0 or img.height == 0:
        raise MaskError(f"zero-area image {path}")
    if img.mode == "RGB":
        img = img.convert("L")
    elif img.mode != "L":
        raise MaskError(
            f"unsupported image mode {img.mode!r} in {path}: "
            "expected 8-bit grayscale or RGB"
        )
    arr = np.asarray(img, dtype=np.uint8)
    return VesselMask((arr > LUMINANCE_THRESHOLD).astype(np.uint8))


def write_mask(mask, path):
    """Write a mask as 8-bit grayscale with foreground = 255 (.png / .pgm)."""
    path = Path(path)
    img = Image.fromarray(mask.pixels * np.uint8(255), mode="L")
    img.save(path)
    return path


def resample_to_working(mask, target=WORKING_RESOLUTION):
    """Nearest-neighbor resample to ``target`` x ``target``.

    Source index = floor((i + 0.5) * src / target), the pixel-center
    convention, so the operation is the identity at the target size and
    stays strictly binary.
    """
    if target <= 0:
        raise ValueError(f"target resolution must be positive, got {target}")
    h, w = mask.pixels.shape
    if h == target and w == target:
        return mask
    rows = np.minimum((np.arange(target) + 0.5) * h / target, h - 1).astype(np.int64)
    cols = np.minimum((np.arange(target) + 0.5) * w / target, w - 1).astype(np.int64)
    return VesselMask(mask.pixels[rows][:, cols])


def distance_transform(mask):
    """Exact Euclidean distance transform of the mask as a RadiusField.

    Raises MaskError when the mask has foreground but no background at
    all, since the distance is undefined there.
    """
    px = mask.pixels
    n_fg = int(px.sum())
    if n_fg == px.size and n_fg > 0:
        raise MaskError("mask has no background pixel; distance undefined")
    if n_fg == 0:
        return RadiusField(np.zeros(px.shape, dtype=np.float64))
    return RadiusField(_kernels.edt(px))


def brute_force_distance(mask):
    """O(fg x bg) all-pairs oracle for the distance transform.

    Only intended for small masks in tests and verification.
    """
    px = mask.pixels
    out = np.zeros(px.shape, dtype=np.float64)
    fg = np.argwhere(px == 1)
    bg = np.argwhere(px == 0)
    if fg.size == 0:
        return out
    if bg.size == 0:
        raise MaskError("mask has no background pixel; distance undefined")
    for r, c in fg:
        d2 = (bg[:, 0] - r) ** 2 + (bg[:, 1] - c) ** 2
        out[r, c] = np.sqrt(float(d2.min()))
    return out


def pixel_drop(mask, fraction, seed):
    """Flip round(fraction * foreground) foreground pixels to background.

    Pixels are drawn uniformly without replacement from a stream fully
    determined by ``seed``; identical inputs give bit-identical outputs.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"drop fraction must be in (0, 1), got {fraction}")
    px = mask.pixels
    flat_fg = np.flatnonzero(px.ravel())
    if flat_fg.size == 0:
        raise MaskError("mask has no foreground to drop")
    k = int(round(fraction * flat_fg.size))
    rng = np.random.default_rng(np.random.SeedSequence(_as_seed_words(seed, _PIXEL_DROP_TAG)))
    chosen = rng.choice(flat_fg.size, size=k, replace=False)
    out = px.copy().ravel()
    out[flat_fg[chosen]] = 0
    return VesselMask(out.reshape(px.shape))
