"""The metric-learning segmentation pipeline, end to end.

proposals -> descriptors -> embeddings -> k-NN labels -> pixel votes -> fused labels
"""
from __future__ import annotations

import logging

import numpy as np

from .features import describe_patch
from .gallery import Gallery, classify_batch
from .hierarchy import HierarchyConfig, extract_proposals
from .raster import as_boundary_map, as_color_image, check_same_shape
from .vote import accumulate, fuse

log = logging.getLogger(__name__)

BACKGROUND = 0


def segment_image(net, gallery: Gallery, image, boundary, expected=None, k=3, cfg: HierarchyConfig | None = None):
    """Label map for one image.

    ``expected`` restricts the vote to the listed classes; ``None`` disables
    the filter (every gallery class may win). Background (class 0) is always
    admissible when the gallery holds tote views.
    """
    img = as_color_image(image)
    b = as_boundary_map(boundary)
    check_same_shape(img, b, what="image and boundary map")
    props = extract_proposals(b, cfg)
    if not props:
        log.warning("no region proposals survived the size filter; returning background")
        return np.zeros(b.shape, dtype=np.int32)
    x = np.stack([describe_patch(img, p.mask) for p in props])
    labels = classify_batch(gallery, net.embed(x), k)
    tally = accumulate(((p.mask, lab) for p, lab in zip(props, labels)), b.shape)
    admissible = set(gallery.classes) if expected is None else {int(c) for c in expected}
    if BACKGROUND in gallery.classes:
        admissible.add(BACKGROUND)
    return fuse(tally, admissible)


def enroll_views(net, views, gallery: Gallery | None = None, background_views=0) -> Gallery:
    """Enroll ``(image, labels)`` captures.

    Every non-zero class region of each capture becomes one entry; the
    background of the first ``background_views`` captures is enrolled as
    class 0.
    """
    vecs, ids = [], []
    for n, (image, labels) in enumerate(views):
        for cid in np.unique(labels):
            if cid == BACKGROUND and n >= background_views:
                continue
            vecs.append(describe_patch(image, labels == cid))
            ids.append(int(cid))
    g = gallery if gallery is not None else Gallery(dim=net.output_dim)
    if not vecs:
        return g
    emb = net.embed(np.stack(vecs))
    for v, c in zip(emb, ids):
        g = g.add(v, c)
    return g
