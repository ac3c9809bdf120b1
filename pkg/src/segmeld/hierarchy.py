"""Class-agnostic region proposals from a boundary map.

A boundary map is cut at a list of levels. At level ``t`` two 4-adjacent
pixels are connected when the strength of the edge between them, the larger
of the two pixel strengths, is below ``t``. Connected components of that
graph form a partition of the image; raising ``t`` only adds edges, so the
partitions are nested. Every region at every level is a proposal, subject to
a relative size filter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError
from .raster import as_boundary_map, ensure_dir, load_json, read_pgm16, save_json, write_pgm16


def _default_thresholds():
    return tuple(float(t) for t in np.linspace(0.05, 0.95, 15))


@dataclass(frozen=True)
class RegionProposal:
    mask: np.ndarray
    threshold: float
    area: int

    def __post_init__(self):
        if self.area < 1 or self.area != int(np.count_nonzero(self.mask)):
            raise ValueError("area must equal the (positive) number of mask pixels")


@dataclass(frozen=True)
class HierarchyConfig:
    thresholds: tuple = field(default_factory=_default_thresholds)
    min_area_fraction: float = 0.001
    max_area_fraction: float = 0.5

    def __post_init__(self):
        ts = tuple(sorted(float(t) for t in self.thresholds))
        if not ts:
            raise ConfigError("at least one threshold is required")
        if any(not 0.0 < t <= 1.0 for t in ts):
            raise ConfigError(f"thresholds must lie in (0, 1], got {ts}")
        if any(a == b for a, b in zip(ts, ts[1:])):
            raise ConfigError("thresholds must be distinct")
        if not 0.0 < self.min_area_fraction < self.max_area_fraction <= 1.0:
            raise ConfigError("need 0 < min_area_fraction < max_area_fraction <= 1")
        object.__setattr__(self, "thresholds", ts)


def partition(boundary, t: float) -> np.ndarray:
    """Region index per pixel for the cut at level ``t``.

    Regions are numbered 0, 1, ... in order of their first pixel in
    row-major order, so the numbering is canonical.
    """
    b = as_boundary_map(boundary)
    if not 0.0 < t <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {t}")
    h, w = b.shape
    idx = np.arange(h * w).reshape(h, w)
    horiz = np.maximum(b[:, :-1], b[:, 1:]) < t
    vert = np.maximum(b[:-1, :], b[1:, :]) < t
    rows = np.concatenate([idx[:, :-1][horiz], idx[:-1, :][vert]])
    cols = np.concatenate([idx[:, 1:][horiz], idx[1:, :][vert]])
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(h * w, h * w))
    _, comp = connected_components(graph, directed=False)
    _, first, inverse = np.unique(comp, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse].reshape(h, w)


def regions_at_threshold(boundary, t: float) -> list[RegionProposal]:
    """All regions of the cut at level ``t``, without any size filter."""
    part = partition(boundary, t)
    areas = np.bincount(part.ravel())
    return [RegionProposal(part == r, float(t), int(a)) for r, a in enumerate(areas)]


def extract_proposals(boundary, cfg: HierarchyConfig | None = None) -> list[RegionProposal]:
    """Size-filtered, de-duplicated regions over all levels of ``cfg``.

    Regions larger than ``max_area_fraction`` or smaller than
    ``min_area_fraction`` of the image are dropped (strict comparisons). A
    pixel set seen at several levels is kept once, at its lowest level.
    Output is ordered by level, then by first pixel.
    """
    cfg = cfg or HierarchyConfig()
    b = as_boundary_map(boundary)
    n = b.size
    lo, hi = cfg.min_area_fraction * n, cfg.max_area_fraction * n
    seen = set()
    out = []
    for t in cfg.thresholds:
        part = partition(b, t)
        flat = part.ravel()
        areas = np.bincount(flat)
        keep = np.flatnonzero((areas >= lo) & (areas <= hi))
        if keep.size == 0:
            continue
        order = np.argsort(flat, kind="stable")
        starts = np.concatenate([[0], np.cumsum(areas)])
        for r in keep:
            pixels = order[starts[r]:starts[r + 1]]
            key = pixels.tobytes()
            if key in seen:
                continue
            seen.add(key)
            mask = np.zeros(n, dtype=bool)
            mask[pixels] = True
            out.append(RegionProposal(mask.reshape(b.shape), t, int(areas[r])))
    return out


def export_proposals(proposals, out_dir) -> Path:
    """Write each mask as a 16-bit PGM plus an ``index.json`` listing them."""
    out = ensure_dir(out_dir)
    index = []
    for k, prop in enumerate(proposals):
        name = f"mask_{k:04d}.pgm"
        write_pgm16(prop.mask, out / name)
        index.append({"file": name, "threshold": prop.threshold, "area": prop.area})
    save_json({"proposals": index}, out / "index.json")
    return out


def load_proposals(in_dir) -> list[RegionProposal]:
    src = Path(in_dir)
    index = load_json(src / "index.json")
    return [
        RegionProposal(read_pgm16(src / e["file"], kind="mask"), float(e["threshold"]), int(e["area"]))
        for e in index["proposals"]
    ]
