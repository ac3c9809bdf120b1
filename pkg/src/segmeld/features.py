"""Hand-crafted patch descriptors fed to the embedding network."""
from __future__ import annotations

import numpy as np

from .errors import EmptyMask
from .raster import as_color_image, as_mask, check_same_shape

GRID = 4
HUE_BINS = 16
DESCRIPTOR_DIM = GRID * GRID * 3 + HUE_BINS


def hue_saturation(rgb):
    """Hue in [0, 1) and HSV saturation for an ``(..., 3)`` uint8 array."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    r, g, b = c[..., 0], c[..., 1], c[..., 2]
    mx = c.max(axis=-1)
    mn = c.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(
        mx == r, ((g - b) / safe) % 6.0,
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    ) / 6.0
    hue = np.where(delta > 0, hue, 0.0) % 1.0
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return hue, sat


def _l1(v):
    s = np.abs(v).sum()
    return v / s if s > 0 else v


def describe_patch(image, mask) -> np.ndarray:
    """Descriptor of the masked pixels: colour layout plus hue histogram.

    The first block holds mean RGB over a 4x4 grid laid on the mask's bounding
    box (cells with no mask pixels stay zero). The second is a 16-bin hue
    histogram weighted by saturation. Each block is L1-normalised.
    """
    img = as_color_image(image)
    m = as_mask(mask)
    check_same_shape(img, m, what="image and mask")
    ys, xs = np.nonzero(m)
    if ys.size == 0:
        raise EmptyMask("cannot describe an empty mask")

    top, bottom = ys.min(), ys.max() + 1
    left, right = xs.min(), xs.max() + 1
    cy = np.minimum((ys - top) * GRID // (bottom - top), GRID - 1)
    cx = np.minimum((xs - left) * GRID // (right - left), GRID - 1)
    cell = cy * GRID + cx
    pix = img[ys, xs].astype(np.float64) / 255.0
    counts = np.bincount(cell, minlength=GRID * GRID)
    sums = np.stack([np.bincount(cell, weights=pix[:, ch], minlength=GRID * GRID) for ch in range(3)], axis=1)
    means = np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)

    hue, sat = hue_saturation(img[ys, xs])
    bins = np.minimum((hue * HUE_BINS).astype(int), HUE_BINS - 1)
    hist = np.bincount(bins, weights=sat, minlength=HUE_BINS)
    return np.concatenate([_l1(means.ravel()), _l1(hist)])
