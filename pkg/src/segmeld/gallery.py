"""Reference embeddings and exact k-nearest-neighbour lookup."""
from __future__ import annotations

import numpy as np

from .embed import EmbeddingNet
from .errors import ConfigError, DimensionMismatch, GalleryTooSmall
from .features import describe_patch
from .raster import load_json, save_json

GALLERY_FORMAT = "segmeld-gallery/1"


class Gallery:
    """Enrolled unit-norm embeddings with their class ids, in enrollment order.

    Enrollment returns a new gallery; an instance is never mutated once built.
    """

    def __init__(self, vectors=None, class_ids=(), dim=None):
        if vectors is None or len(class_ids) == 0:
            self.vectors = np.zeros((0, dim or 0))
        else:
            self.vectors = np.atleast_2d(np.array(vectors, dtype=np.float64))
        self.class_ids = np.array(class_ids, dtype=np.int64)
        if self.vectors.shape[0] != self.class_ids.size:
            raise DimensionMismatch("one class id per vector required")
        self.vectors.setflags(write=False)
        self.class_ids.setflags(write=False)

    def __len__(self):
        return self.class_ids.size

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def classes(self) -> set[int]:
        return {int(c) for c in self.class_ids}

    def add(self, vector, class_id: int) -> "Gallery":
        v = np.asarray(vector, dtype=np.float64).ravel()
        if len(self) and v.size != self.dim:
            raise DimensionMismatch(f"vector has dimension {v.size}, gallery holds {self.dim}")
        norm = np.linalg.norm(v)
        if not np.isclose(norm, 1.0, atol=1e-9):
            raise ValueError(f"gallery vectors must be unit norm, got {norm}")
        vecs = np.vstack([self.vectors, v[None, :]]) if len(self) else v[None, :]
        return Gallery(vecs, list(self.class_ids) + [int(class_id)])

    def to_json(self) -> dict:
        return {
            "format": GALLERY_FORMAT,
            "d": self.dim,
            "entries": [
                {"class_id": int(c), "vector": v.tolist()} for c, v in zip(self.class_ids, self.vectors)
            ],
        }

    @classmethod
    def from_json(cls, doc) -> "Gallery":
        if doc.get("format") != GALLERY_FORMAT:
            raise ConfigError(f"unsupported gallery format {doc.get('format')!r}")
        entries = doc["entries"]
        if not entries:
            return cls(dim=doc.get("d"))
        g = cls([e["vector"] for e in entries], [e["class_id"] for e in entries])
        if g.dim != doc.get("d", g.dim):
            raise DimensionMismatch("gallery entries disagree with declared dimension")
        return g


def save_gallery(gallery: Gallery, path):
    save_json(gallery.to_json(), path)


def load_gallery(path) -> Gallery:
    return Gallery.from_json(load_json(path))


def enroll(gallery: Gallery, image, mask, class_id: int, net: EmbeddingNet) -> Gallery:
    """Embed the masked patch and append it; no retraining involved."""
    x = describe_patch(image, mask)
    if x.size != net.input_dim:
        raise DimensionMismatch(f"descriptor dimension {x.size} != net input {net.input_dim}")
    return gallery.add(net.embed(x)[0], class_id)


def distances(gallery: Gallery, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.size != gallery.dim:
        raise DimensionMismatch(f"query has dimension {q.size}, gallery holds {gallery.dim}")
    diff = gallery.vectors - q
    return np.sqrt(np.sum(diff * diff, axis=1))


def classify(gallery: Gallery, query, k: int = 3) -> list[tuple[int, float]]:
    """The ``k`` nearest entries as ``(class_id, distance)``, nearest first.

    Equal distances are ordered by enrollment order.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(gallery) < k:
        raise GalleryTooSmall(f"gallery holds {len(gallery)} entries, k = {k}")
    d = distances(gallery, query)
    idx = np.argsort(d, kind="stable")[:k]
    return [(int(gallery.class_ids[i]), float(d[i])) for i in idx]


def classify_batch(gallery: Gallery, queries, k: int = 3) -> np.ndarray:
    """Class ids of the ``k`` nearest entries for each query row."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(gallery) < k:
        raise GalleryTooSmall(f"gallery holds {len(gallery)} entries, k = {k}")
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[1] != gallery.dim:
        raise DimensionMismatch(f"queries have dimension {q.shape[1]}, gallery holds {gallery.dim}")
    diff = q[:, None, :] - gallery.vectors[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    return gallery.class_ids[idx]
