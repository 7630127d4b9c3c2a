"""Decoupled parametric perturbation families.

Four families plus the untouched baseline:

  tortuosity   displaces interior control points perpendicular to the
               segment chord by sign * gamma * alpha * chord_length,
               antisymmetrically on P1/P2 (S-shaped bend); endpoints,
               chords, and connectivity are untouched
  arc_drop     deletes a random fraction of whole segments
  radius_scale multiplies the radius field by a global factor <= 1
  pixel_drop   deletes mask pixels at random, then re-runs the whole
               skeletonize-and-fit pipeline (the non-decoupled control)

All randomness is keyed by (seed, segment id) through a splitmix64
hash, so per-segment draws are order-independent and reruns with the
same seed are bit-identical.
"""

import warnings
from dataclasses import dataclass, replace as dataclass_replace

import numpy as np

from vesseltree import bezier, mask_io
from vesseltree.bezier import BezierTree, TreeSegment
from vesseltree.errors import ConfigError
from vesseltree.mask_io import RadiusField

DEFAULT_GAMMA = 0.15
TORTUOSITY_ALPHAS = (1.0, 2.0, 4.0)
ARC_DROP_FRACTIONS = (0.10, 0.20, 0.30)
RADIUS_FACTORS = (0.85, 0.70, 0.55)
PIXEL_DROP_FRACTIONS = (0.10, 0.20, 0.30)

FAMILIES = ("baseline", "tortuosity", "arc_drop", "radius_scale", "pixel_drop")

# canonical 13 configuration names; CAUSAL_TABLE_ORDER is the report order
CONFIG_NAMES = (
    "baseline",
    "tortuosity_1x",
    "tortuosity_2x",
    "tortuosity_4x",
    "arc_drop_10",
    "arc_drop_20",
    "arc_drop_30",
    "radius_x0.85",
    "radius_x0.70",
    "radius_x0.55",
    "pixdrop_10",
    "pixdrop_20",
    "pixdrop_30",
)

CAUSAL_TABLE_ORDER = (
    "tortuosity_4x",
    "tortuosity_2x",
    "tortuosity_1x",
    "arc_drop_30",
    "arc_drop_20",
    "arc_drop_10",
    "radius_x0.55",
    "radius_x0.70",
    "radius_x0.85",
    "pixdrop_30",
    "pixdrop_20",
    "pixdrop_10",
    "baseline",
)

_M64 = (1 << 64) - 1
_ARC_DROP_TAG = 0x61726364


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def segment_sign(seed, segment_id):
    """Counter-based +-1 draw keyed by (seed, segment id)."""
    h = _splitmix64((int(seed) & _M64) ^ _splitmix64(int(segment_id) & _M64))
    return 1.0 if h & 1 else -1.0


_STRENGTH_GRID = {
    "tortuosity": TORTUOSITY_ALPHAS,
    "arc_drop": ARC_DROP_FRACTIONS,
    "radius_scale": RADIUS_FACTORS,
    "pixel_drop": PIXEL_DROP_FRACTIONS,
}


@dataclass(frozen=True)
class PerturbationConfig:
    """One perturbation family at one strength, fully seeded."""

    family: str
    strength: float | None = None
    gamma: float = DEFAULT_GAMMA
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown perturbation family {self.family!r}")
        if self.family == "baseline":
            if self.strength is not None:
                raise ConfigError("baseline carries no strength")
            return
        if self.strength is None or self.strength <= 0:
            raise ConfigError(f"{self.family} needs a positive strength")
        if self.family in ("arc_drop", "pixel_drop") and not self.strength < 1:
            raise ConfigError(f"{self.family} fraction must be < 1")
        if self.family == "radius_scale" and self.strength > 1:
            raise ConfigError("radius factor must be <= 1")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        grid = _STRENGTH_GRID[self.family]
        if not any(abs(self.strength - g) < 1e-12 for g in grid):
            warnings.warn(
                f"{self.family} strength {self.strength} is off the default "
                f"grid {grid}",
                stacklevel=2,
            )

    @property
    def name(self):
        if self.family == "baseline":
            return "baseline"
        if self.family == "tortuosity":
            alpha = self.strength
            return f"tortuosity_{int(alpha)}x" if alpha == int(alpha) else f"tortuosity_{alpha}x"
        if self.family == "arc_drop":
            return f"arc_drop_{int(round(self.strength * 100))}"
        if self.family == "radius_scale":
            return f"radius_x{self.strength:.2f}"
        return f"pixdrop_{int(round(self.strength * 100))}"

    @classmethod
    def from_name(cls, name, seed=0, gamma=DEFAULT_GAMMA):
        if name == "baseline":
            return cls(family="baseline", seed=seed, gamma=gamma)
        if name.startswith("tortuosity_") and name.endswith("x"):
            return cls(family="tortuosity", strength=float(name[11:-1]), seed=seed, gamma=gamma)
        if name.startswith("arc_drop_"):
            return cls(family="arc_drop", strength=int(name[9:]) / 100.0, seed=seed, gamma=gamma)
        if name.startswith("radius_x"):
            return cls(family="radius_scale", strength=float(name[8:]), seed=seed, gamma=gamma)
        if name.startswith("pixdrop_"):
            return cls(family="pixel_drop", strength=int(name[8:]) / 100.0, seed=seed, gamma=gamma)
        raise ConfigError(f"unknown configuration name {name!r}")

    def with_seed(self, seed):
        return dataclass_replace(self, seed=seed)


def grid_configs(seed=0, gamma=DEFAULT_GAMMA):
    """The 13 canonical configurations (baseline plus three doses per family)."""
    return tuple(PerturbationConfig.from_name(n, seed=seed, gamma=gamma) for n in CONFIG_NAMES)


def perturb_tortuosity(tree, alpha, gamma, seed):
    """Perpendicular antisymmetric displacement of interior control points.

    For chord vector v = P3 - P0 of length L and unit perpendicular
    n = (-vy, vx) / L, with per-segment sign s: P1 moves by
    +s*gamma*alpha*L*n and P2 by the exact negation. The displacement
    is quantized to the coordinate grid, which keeps the arithmetic
    exact: endpoints, chord lengths, and parent links are preserved
    bit-for-bit.
    """
    if alpha <= 0 or gamma <= 0:
        raise ConfigError("alpha and gamma must be positive")
    segments = []
    for seg in tree.segments:
        v = seg.ctrl[3] - seg.ctrl[0]
        length = float(np.hypot(v[0], v[1]))
        if length < 1e-9:
            raise ValueError(f"segment {seg.id}: zero chord")
        normal = np.array([-v[1], v[0]]) / length
        s = segment_sign(seed, seg.id)
        disp = bezier.snap(s * gamma * alpha * length * normal)
        ctrl = np.stack([
            seg.ctrl[0],
            seg.ctrl[1] + disp,
            seg.ctrl[2] - disp,
            seg.ctrl[3],
        ])
        segments.append(TreeSegment(id=seg.id, parent=seg.parent, ctrl=ctrl, radius=seg.radius))
    return BezierTree(segments=tuple(segments), source_dims=tree.source_dims,
                      provenance=tree.provenance)


def arc_drop(tree, fraction, seed):
    """Remove round(fraction * n) whole segments uniformly at random.

    Survivors keep their control points bit-identical; parents pointing
    at removed segments become None.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"arc drop fraction must be in (0, 1), got {fraction}")
    n = len(tree)
    if n == 0:
        raise ValueError("cannot drop segments from an empty tree")
    k = int(round(fraction * n))
    rng = np.random.default_rng(
        np.random.SeedSequence([int(seed) & _M64, _ARC_DROP_TAG])
    )
    removed_pos = set(rng.choice(n, size=k, replace=False).tolist())
    removed_ids = {tree.segments[i].id for i in removed_pos}
    survivors = []
    for i, seg in enumerate(tree.segments):
        if i in removed_pos:
            continue
        if seg.parent in removed_ids:
            seg = TreeSegment(id=seg.id, parent=None, ctrl=seg.ctrl, radius=seg.radius)
        survivors.append(seg)
    return BezierTree(segments=tuple(survivors), source_dims=tree.source_dims,
                      provenance=tree.provenance)


def radius_scale(field, factor):
    """Multiply the whole radius field by a global factor in (0, 1]."""
    if not 0.0 < factor <= 1.0:
        raise ConfigError(f"radius factor must be in (0, 1], got {factor}")
    return RadiusField(field.values * factor)


def apply(config, tree, field, mask):
    """Dispatch a configuration; returns (tree, field, mask) after it.

    baseline returns the inputs untouched. pixel_drop degrades the mask
    and re-runs the full encode pipeline, so all three outputs change;
    every other family touches exactly one of them.
    """
    if config.family == "baseline":
        return tree, field, mask
    if config.family == "tortuosity":
        out = perturb_tortuosity(tree, config.strength, config.gamma, config.seed)
        return out, field, mask
    if config.family == "arc_drop":
        return arc_drop(tree, config.strength, config.seed), field, mask
    if config.family == "radius_scale":
        return tree, radius_scale(field, config.strength), mask
    if config.family == "pixel_drop":
        from vesseltree import pipeline

        dropped = mask_io.pixel_drop(mask, config.strength, config.seed)
        result = pipeline.encode_mask(dropped, provenance=tree.provenance)
        return result.tree, result.field, dropped
    raise ConfigError(f"unknown perturbation family {config.family!r}")
