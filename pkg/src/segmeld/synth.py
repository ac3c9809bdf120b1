"""Synthetic tote scenes with exact ground truth.

Each scene is a grey "tote" background with a number of flat-coloured
rectangles and ellipses, one per item. The generator returns the colour
image, the exact label map, a boundary map derived from label
discontinuities, and the set of classes that remain visible.
"""
from __future__ import annotations

import colorsys
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InfeasiblePlacement
from .raster import ClassRegistry

TOTE_COLOR = (96, 96, 104)
MAX_PLACEMENT_TRIES = 200


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    width: int = 96
    height: int = 96
    min_items: int = 1
    max_items: int = 1
    shapes: tuple = ("rectangle", "ellipse")
    # item extent as a fraction of min(width, height)
    min_size: float = 0.18
    max_size: float = 0.35
    # class id -> (r, g, b); classes not listed get evenly spaced hues
    colors: dict = field(default_factory=dict)
    noise: float = 0.0
    # per-item brightness jitter, models view-to-view appearance change
    jitter: float = 0.1
    occlusion: bool = False

    def __post_init__(self):
        if self.min_items < 0 or self.max_items < self.min_items:
            raise ConfigError(f"empty item count range [{self.min_items}, {self.max_items}]")
        if self.noise < 0 or self.jitter < 0:
            raise ConfigError("noise and jitter must be non-negative")
        if self.width < 1 or self.height < 1:
            raise ConfigError("scene dimensions must be positive")
        if not 0 < self.min_size <= self.max_size <= 1:
            raise ConfigError("need 0 < min_size <= max_size <= 1")
        bad = set(self.shapes) - {"rectangle", "ellipse"}
        if not self.shapes or bad:
            raise ConfigError(f"unknown shapes {sorted(bad)}")
        object.__setattr__(self, "shapes", tuple(self.shapes))
        object.__setattr__(
            self, "colors", {int(k): tuple(int(c) for c in v) for k, v in dict(self.colors).items()}
        )

    def with_seed(self, seed) -> "SceneSpec":
        doc = self.to_json()
        doc["seed"] = int(seed)
        return SceneSpec.from_json(doc)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["shapes"] = list(self.shapes)
        doc["colors"] = {str(k): list(v) for k, v in sorted(self.colors.items())}
        return doc

    @classmethod
    def from_json(cls, doc) -> "SceneSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown scene spec fields {sorted(extra)}")
        return cls(**doc)


class Scene(NamedTuple):
    image: np.ndarray
    labels: np.ndarray
    boundary: np.ndarray
    present: frozenset
    item_count: int


def palette(registry: ClassRegistry, overrides=None) -> dict:
    """Evenly spaced, fully saturated hues in registry order."""
    overrides = overrides or {}
    n = len(registry)
    out = {}
    for k, cid in enumerate(registry.ids):
        if cid in overrides:
            out[cid] = tuple(overrides[cid])
            continue
        r, g, b = colorsys.hsv_to_rgb(k / n, 0.85, 0.9)
        out[cid] = (round(r * 255), round(g * 255), round(b * 255))
    return out


def label_boundaries(labels) -> np.ndarray:
    """1.0 where any 4-neighbour carries a different label, else 0.0."""
    lab = np.asarray(labels)
    edge = np.zeros(lab.shape, dtype=bool)
    dv = lab[1:, :] != lab[:-1, :]
    dh = lab[:, 1:] != lab[:, :-1]
    edge[1:, :] |= dv
    edge[:-1, :] |= dv
    edge[:, 1:] |= dh
    edge[:, :-1] |= dh
    return edge.astype(np.float64)


def _shape_mask(kind, h, w, top, left, sh, sw):
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "rectangle":
        return (yy >= top) & (yy < top + sh) & (xx >= left) & (xx < left + sw)
    cy, cx = top + (sh - 1) / 2.0, left + (sw - 1) / 2.0
    ry, rx = sh / 2.0, sw / 2.0
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _random_shape(rng, spec):
    h, w = spec.height, spec.width
    base = min(h, w)
    lo = max(2, int(round(spec.min_size * base)))
    hi = max(lo, int(round(spec.max_size * base)))
    sh = int(rng.integers(lo, hi + 1))
    sw = int(rng.integers(lo, hi + 1))
    sh, sw = min(sh, h), min(sw, w)
    top = int(rng.integers(0, h - sh + 1))
    left = int(rng.integers(0, w - sw + 1))
    kind = spec.shapes[int(rng.integers(len(spec.shapes)))]
    return _shape_mask(kind, h, w, top, left, sh, sw)


def generate_scene(spec: SceneSpec, registry: ClassRegistry, item_count=None) -> Scene:
    """Render one scene. Deterministic given ``spec.seed``.

    ``item_count`` overrides the count otherwise drawn from min_items..max_items.
    Classes are drawn without replacement while the registry allows it.
    """
    if len(registry) == 0:
        raise ConfigError("registry is empty")
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    if item_count is None:
        item_count = int(rng.integers(spec.min_items, spec.max_items + 1))
    ids = np.array(registry.ids)
    classes = rng.choice(ids, size=item_count, replace=item_count > len(ids))
    colors = palette(registry, spec.colors)

    labels = np.zeros((h, w), dtype=np.int32)
    image = np.empty((h, w, 3), dtype=np.float64)
    image[:] = TOTE_COLOR
    occupied = np.zeros((h, w), dtype=bool)
    for cid in classes:
        for _ in range(MAX_PLACEMENT_TRIES):
            mask = _random_shape(rng, spec)
            if spec.occlusion or not np.any(mask & occupied):
                break
        else:
            raise InfeasiblePlacement(
                f"could not place {item_count} disjoint items in {w}x{h} "
                f"after {MAX_PLACEMENT_TRIES} tries per item"
            )
        gain = 1.0 + spec.jitter * (2.0 * rng.random() - 1.0)
        image[mask] = np.clip(np.array(colors[int(cid)]) * gain, 0, 255)
        labels[mask] = cid
        occupied |= mask

    return _finish(rng, spec, image, labels, item_count)


def generate_capture(spec: SceneSpec, registry: ClassRegistry, class_ids) -> Scene:
    """Render an uncluttered capture with the given items side by side.

    Items are placed left to right in the given order, in disjoint vertical
    strips, mimicking the two-items-per-shot collection protocol.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    colors = palette(registry, spec.colors)
    n = len(class_ids)
    labels = np.zeros((h, w), dtype=np.int32)
    image = np.empty((h, w, 3), dtype=np.float64)
    image[:] = TOTE_COLOR
    strip = w // max(n, 1)
    base = min(h, w)
    for k, cid in enumerate(class_ids):
        lo = max(2, int(round(spec.min_size * base)))
        hi = max(lo, int(round(spec.max_size * base)))
        sh = min(int(rng.integers(lo, hi + 1)), h - 2)
        sw = min(int(rng.integers(lo, hi + 1)), strip - 2)
        if sw < 1 or sh < 1:
            raise InfeasiblePlacement(f"{n} items do not fit side by side in width {w}")
        top = int(rng.integers(1, h - sh))
        left = k * strip + int(rng.integers(1, strip - sw))
        kind = spec.shapes[int(rng.integers(len(spec.shapes)))]
        mask = _shape_mask(kind, h, w, top, left, sh, sw)
        gain = 1.0 + spec.jitter * (2.0 * rng.random() - 1.0)
        image[mask] = np.clip(np.array(colors[int(cid)]) * gain, 0, 255)
        labels[mask] = cid
    return _finish(rng, spec, image, labels, n)


def _finish(rng, spec, image, labels, item_count):
    boundary = label_boundaries(labels)
    if spec.noise > 0:
        # pixel noise sigma is half the amplitude in 8-bit units
        image = image + rng.normal(0.0, 255.0 * spec.noise / 2.0, size=image.shape)
        u = rng.random(boundary.shape)
        boundary = np.where(boundary > 0, 1.0 - spec.noise * u, spec.noise * u)
        boundary = np.clip(boundary, 0.0, 1.0)
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    present = frozenset(int(c) for c in np.unique(labels) if c != 0)
    return Scene(image, labels, boundary, present, int(item_count))
