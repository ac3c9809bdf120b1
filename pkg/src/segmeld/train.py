"""Triplet sampling and the SGD loop for the embedding network."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .embed import EmbeddingNet, LossConfig, Triplet, combined_terms, loss_and_grad
from .errors import ConfigError, DimensionMismatch, InsufficientClasses, InsufficientMembers, IoFailure, NonFiniteLoss
from .features import describe_patch
from .raster import read_pgm16, read_ppm

log = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    triplets: int = 8000
    batch_size: int = 64
    lr: float = 0.1
    halving_period: int = 3
    weight_decay: float = 0.0005
    last_layer_lr_mult: float = 10.0
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.epochs < 0 or self.triplets < 1 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0, triplets and batch_size >= 1")
        if self.lr <= 0 or self.halving_period < 1 or self.weight_decay < 0 or self.last_layer_lr_mult <= 0:
            raise ConfigError("lr and lr multiplier must be positive, halving_period >= 1, decay >= 0")
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))

    def lr_at(self, epoch: int) -> float:
        return self.lr * 2.0 ** (-(epoch // self.halving_period))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc) -> "TrainConfig":
        extra = set(doc) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown train config fields {sorted(extra)}")
        return cls(**doc)


class PatchDataset:
    """Descriptors with class ids, indexed by class."""

    def __init__(self, descriptors, labels):
        self.x = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
        self.y = np.asarray(labels, dtype=np.int64)
        if self.x.shape[0] != self.y.shape[0]:
            raise DimensionMismatch("one label per descriptor required")
        self.classes = sorted(int(c) for c in np.unique(self.y))
        self.members = {c: np.flatnonzero(self.y == c) for c in self.classes}

    def __len__(self):
        return self.y.size

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def check(self):
        if len(self.classes) < 2:
            raise InsufficientClasses(f"need at least 2 classes, have {len(self.classes)}")
        if not any(len(m) >= 2 for m in self.members.values()):
            raise InsufficientMembers("no class has the two members needed for an anchor/positive pair")


def sample_triplet_indices(ds: PatchDataset, count: int, seed) -> np.ndarray:
    """``(count, 3)`` array of dataset rows (anchor, positive, negative).

    Anchor class is uniform over classes with at least two members, the
    anchor/positive pair is a uniform distinct pair within it, the negative
    class is uniform over the remaining classes and its member uniform.
    """
    ds.check()
    rng = np.random.default_rng(seed)
    all_classes = np.array(ds.classes)
    sizes = np.array([len(ds.members[c]) for c in ds.classes])
    width = sizes.max()
    table = np.full((len(all_classes), width), -1, dtype=np.int64)
    for k, c in enumerate(ds.classes):
        table[k, : sizes[k]] = ds.members[c]
    anchor_pool = np.flatnonzero(sizes >= 2)

    ac = anchor_pool[rng.integers(0, anchor_pool.size, size=count)]
    ia = rng.integers(0, sizes[ac])
    ip = rng.integers(0, sizes[ac] - 1)
    ip = ip + (ip >= ia)
    nc = rng.integers(0, all_classes.size - 1, size=count)
    nc = nc + (nc >= ac)
    ineg = rng.integers(0, sizes[nc])
    return np.stack([table[ac, ia], table[ac, ip], table[nc, ineg]], axis=1)


def sample_triplets(ds: PatchDataset, count: int, seed) -> list[Triplet]:
    rows = sample_triplet_indices(ds, count, seed)
    return [
        Triplet(ds.x[a], ds.x[p], ds.x[n], int(ds.y[a]), int(ds.y[n]))
        for a, p, n in rows
    ]


def sgd_step(net: EmbeddingNet, grads, lr: float, decay: float, last_layer_mult: float = 1.0):
    """In-place ``p <- p - lr_l * (g + decay * p)``; the last layer uses ``lr * mult``."""
    params = net.params()
    last = len(params) - 2
    for k, (p, g) in enumerate(zip(params, grads)):
        step = lr * (last_layer_mult if k >= last else 1.0)
        p -= step * (g + decay * p)


def _combined(cfg: LossConfig):
    return lambda fa, fp, fn: combined_terms(fa, fp, fn, cfg)


def train(net: EmbeddingNet, ds: PatchDataset, cfg: TrainConfig | None = None, loss_fn=None):
    """Fit ``net`` to ``ds``; returns ``(trained_net, per_epoch_mean_loss)``.

    The input net is not modified. ``loss_fn(net, a, p, n) -> (value, grads)``
    replaces the combined loss when given.
    """
    cfg = cfg or TrainConfig()
    if ds.dim != net.input_dim:
        raise DimensionMismatch(f"descriptors have dimension {ds.dim}, net expects {net.input_dim}")
    net = net.copy()
    if cfg.epochs == 0:
        return net, []
    if loss_fn is None:
        terms = _combined(cfg.loss)
        loss_fn = lambda n_, a, p, q: loss_and_grad(n_, a, p, q, terms)  # noqa: E731

    rows = sample_triplet_indices(ds, cfg.triplets, cfg.seed)
    order_rng = np.random.default_rng([cfg.seed, 1])
    trace = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = order_rng.permutation(rows.shape[0])
        losses = []
        for start in range(0, perm.size, cfg.batch_size):
            batch = rows[perm[start:start + cfg.batch_size]]
            value, grads = loss_fn(net, ds.x[batch[:, 0]], ds.x[batch[:, 1]], ds.x[batch[:, 2]])
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NonFiniteLoss(f"non-finite loss {value} at epoch {epoch}, batch starting {start}")
            sgd_step(net, grads, lr, cfg.weight_decay, cfg.last_layer_lr_mult)
            losses.append(value)
        trace.append(float(np.mean(losses)))
        log.info("epoch %d lr %.5g mean loss %.6f", epoch, lr, trace[-1])
    return net, trace


def distance_gap(net: EmbeddingNet, ds: PatchDataset):
    """Mean intra-class and mean inter-class embedding distance over all pairs."""
    y = net.embed(ds.x)
    diff = y[:, None, :] - y[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    same = ds.y[:, None] == ds.y[None, :]
    off = ~np.eye(len(ds), dtype=bool)
    return float(dist[same & off].mean()), float(dist[~same].mean())


# -- building datasets from labelled images --------------------------------------

def patches_from_labels(image, labels, include_background=True, min_pixels=4):
    """One descriptor per 4-connected component of every label in ``labels``."""
    out_x, out_y = [], []
    for cid in np.unique(labels):
        if cid == 0 and not include_background:
            continue
        comps, n = ndimage.label(labels == cid, structure=FOUR_CONNECTED)
        for k in range(1, n + 1):
            m = comps == k
            if np.count_nonzero(m) >= min_pixels:
                out_x.append(describe_patch(image, m))
                out_y.append(int(cid))
    return out_x, out_y


def scene_pairs(data_dir):
    """Sorted ``(stem, image_path, label_path)`` for ``*.ppm`` / ``*.labels.pgm`` pairs."""
    root = Path(data_dir)
    if not root.is_dir():
        raise IoFailure(f"data directory {root} does not exist")
    pairs = []
    for img in sorted(root.glob("*.ppm")):
        lab = img.with_suffix(".labels.pgm")
        if lab.exists():
            pairs.append((img.stem, img, lab))
    return pairs


def dataset_from_dir(data_dir, include_background=True, min_pixels=4) -> PatchDataset:
    xs, ys = [], []
    for _, img, lab in scene_pairs(data_dir):
        x, y = patches_from_labels(read_ppm(img), read_pgm16(lab), include_background, min_pixels)
        xs += x
        ys += y
    if not xs:
        raise InsufficientClasses(f"no labelled patches found under {data_dir}")
    return PatchDataset(np.stack(xs), ys)


def separable_patches(n_classes=4, per_class=40, dim=64, spread=0.3, seed=0) -> PatchDataset:
    """Gaussian clusters around random unit-length centres, one per class.

    The clusters are linearly separable with overwhelming probability but an
    untrained net does not map them to well separated embeddings.
    """
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(n_classes, dim))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    x = np.concatenate([c + rng.normal(scale=spread, size=(per_class, dim)) for c in centres])
    y = np.repeat(np.arange(1, n_classes + 1), per_class)
    return PatchDataset(x, y)
