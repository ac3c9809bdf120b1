"""Pixel-vote fusion of labelled proposals, and restricted argmax over score maps."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatch, UnknownClassInExpected
from .raster import BOUNDARY_SCALE, ensure_dir, load_json, read_pgm16, save_json, write_pgm16

SCORES_FORMAT = "segmeld-scores/1"


class TallyGrid:
    """Per-pixel vote counts, stored as one integer plane per voted class."""

    def __init__(self, shape, planes=None):
        self.shape = tuple(shape)
        self.planes = dict(planes or {})

    def classes(self) -> list[int]:
        return sorted(self.planes)

    def at(self, y, x) -> dict:
        """Non-zero counts at one pixel, ``{class_id: count}``."""
        return {c: int(p[y, x]) for c, p in sorted(self.planes.items()) if p[y, x] > 0}


def accumulate(proposals, shape=None) -> TallyGrid:
    """Add one vote per (mask, label) pair to every pixel of the mask.

    ``proposals`` is a sequence of ``(mask, labels)``; a label repeated in a
    list counts once per occurrence. ``shape`` is needed only when the list
    may be empty.
    """
    proposals = list(proposals)
    if shape is None:
        if not proposals:
            raise ValueError("shape is required for an empty proposal list")
        shape = np.shape(proposals[0][0])
    shape = tuple(shape)
    planes = {}
    for mask, labels in proposals:
        m = np.asarray(mask, dtype=bool)
        if m.shape != shape:
            raise DimensionMismatch(f"mask shape {m.shape} != {shape}")
        for c in labels:
            c = int(c)
            if c not in planes:
                planes[c] = np.zeros(shape, dtype=np.int32)
            planes[c] += m
    return TallyGrid(shape, planes)


def fuse(tally: TallyGrid, expected) -> np.ndarray:
    """Label each pixel with its most voted expected class (0 if none).

    Votes for classes outside ``expected`` are discarded first. Ties go to
    the smallest class id.
    """
    expected = sorted({int(c) for c in expected})
    if not expected:
        raise ValueError("expected class set must be non-empty")
    keep = [c for c in expected if c in tally.planes]
    out = np.zeros(tally.shape, dtype=np.int32)
    if not keep:
        return out
    stack = np.stack([tally.planes[c] for c in keep])
    # argmax returns the first maximum, i.e. the smallest id since keep is sorted
    best = np.argmax(stack, axis=0)
    voted = stack.max(axis=0) > 0
    out[voted] = np.array(keep, dtype=np.int32)[best[voted]]
    return out


@dataclass
class ScoreMap:
    """Per-class score planes, ``planes[k]`` belonging to ``class_ids[k]``."""

    class_ids: list
    planes: np.ndarray

    def __post_init__(self):
        self.class_ids = [int(c) for c in self.class_ids]
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim != 3 or self.planes.shape[0] != len(self.class_ids):
            raise DimensionMismatch("need one 2-D score plane per class id")
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ConfigError("duplicate class id in score map")
        if not np.all(np.isfinite(self.planes)):
            raise ValueError("scores must be finite")


def restricted_argmax(scores: ScoreMap, expected) -> np.ndarray:
    """Per-pixel argmax over the planes of ``expected`` classes only."""
    expected = sorted({int(c) for c in expected})
    if not expected:
        raise ValueError("expected class set must be non-empty")
    unknown = [c for c in expected if c not in scores.class_ids]
    if unknown:
        raise UnknownClassInExpected(f"classes {unknown} have no score plane")
    rows = [scores.class_ids.index(c) for c in expected]
    best = np.argmax(scores.planes[rows], axis=0)
    return np.array(expected, dtype=np.int32)[best]


def write_scores(scores: ScoreMap, out_dir) -> Path:
    """One 16-bit PGM per class plus ``scores.json`` with the affine mapping.

    A stored sample ``q`` decodes to ``offset + scale * q``.
    """
    out = ensure_dir(out_dir)
    lo, hi = float(scores.planes.min()), float(scores.planes.max())
    scale = (hi - lo) / BOUNDARY_SCALE if hi > lo else 1.0
    entries = []
    for cid, plane in zip(scores.class_ids, scores.planes):
        name = f"class_{cid:05d}.pgm"
        q = np.rint((plane - lo) / scale).astype(np.int64)
        write_pgm16(np.clip(q, 0, BOUNDARY_SCALE), out / name)
        entries.append({"class_id": cid, "file": name})
    save_json({"format": SCORES_FORMAT, "offset": lo, "scale": scale, "classes": entries}, out / "scores.json")
    return out


def read_scores(in_dir) -> ScoreMap:
    src = Path(in_dir)
    doc = load_json(src / "scores.json")
    if doc.get("format") != SCORES_FORMAT:
        raise ConfigError(f"unsupported score map format {doc.get('format')!r}")
    offset = float(doc["offset"])
    default_scale = float(doc["scale"])
    ids, planes = [], []
    for e in doc["classes"]:
        q = read_pgm16(src / e["file"], kind="label").astype(np.float64)
        off = float(e.get("offset", offset))
        sc = float(e.get("scale", default_scale))
        ids.append(int(e["class_id"]))
        planes.append(off + sc * q)
    shapes = {p.shape for p in planes}
    if len(shapes) > 1:
        raise DimensionMismatch(f"score planes differ in size: {sorted(shapes)}")
    return ScoreMap(ids, np.stack(planes))
