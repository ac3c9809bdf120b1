"""Semi-automatic labelling of two-item captures.

A capture holds two items side by side. Its foreground mask should split into
exactly two connected components; the left one (smaller centroid x) takes the
first name read out by the operator, the right one the second. Anything else
goes to a review queue for a human pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import CentroidTie, NeedsReview
from .raster import as_mask

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def default_min_area(shape) -> int:
    return max(1, math.ceil(0.001 * shape[0] * shape[1]))


def components(mask, min_area=1) -> list[np.ndarray]:
    """4-connected components with at least ``min_area`` pixels, in label order."""
    lab, n = ndimage.label(as_mask(mask), structure=FOUR_CONNECTED)
    if n == 0:
        return []
    areas = np.bincount(lab.ravel())
    return [lab == k for k in range(1, n + 1) if areas[k] >= min_area]


def split_two(fg, labels, min_area=None) -> np.ndarray:
    """Label map with ``labels[0]`` on the left item and ``labels[1]`` on the right.

    Raises :class:`NeedsReview` unless exactly two components survive the
    area filter, and :class:`CentroidTie` when their centroids share an x.
    """
    first, second = (int(c) for c in labels)
    if first == second:
        raise ValueError("the two labels must differ")
    fg = as_mask(fg)
    if min_area is None:
        min_area = default_min_area(fg.shape)
    if min_area < 1:
        raise ValueError("min_area must be at least 1")
    comps = components(fg, min_area)
    if len(comps) != 2:
        raise NeedsReview(len(comps))
    cx = [float(np.nonzero(c)[1].mean()) for c in comps]
    if cx[0] == cx[1]:
        raise CentroidTie(cx[0])
    left, right = (comps[0], comps[1]) if cx[0] < cx[1] else (comps[1], comps[0])
    out = np.zeros(fg.shape, dtype=np.int32)
    out[left] = first
    out[right] = second
    return out


@dataclass
class AnnotationResult:
    source: str
    labels: tuple
    label_map: np.ndarray | None = None
    error: NeedsReview | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def annotate_capture(source, fg, labels, min_area=None) -> AnnotationResult:
    try:
        return AnnotationResult(str(source), tuple(labels), split_two(fg, labels, min_area))
    except NeedsReview as exc:
        return AnnotationResult(str(source), tuple(labels), error=exc)


def review_queue(results) -> list[dict]:
    """Failed captures, in input order, as JSON-ready records."""
    return [
        {"mask": r.source, "labels": list(r.labels), "found": r.error.found, "reason": r.error.reason}
        for r in results
        if not r.ok
    ]
