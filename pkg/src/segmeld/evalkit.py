"""Pixel-level segmentation scores with F0.5 as the headline number.

Scores are computed per (image, class). An image's score is the mean over the
classes present in its ground truth; the dataset score is the mean of the
image scores. Label 0 is ignored by default.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, MissingPair, UnknownClass
from .raster import as_label_map, save_json

METRICS = ("precision", "recall", "f05", "f1", "iou")


def f_beta(p: float, r: float, beta: float = 0.5) -> float:
    """``(1 + b^2) p r / (b^2 p + r)``; 0 when the denominator vanishes."""
    b2 = beta * beta
    den = b2 * p + r
    if den == 0:
        return 0.0
    return (1 + b2) * p * r / den


def confusion(pred, gt, ignore=(0,)) -> dict:
    """``{class_id: (tp, fp, fn)}`` for every non-ignored class in pred or gt.

    Pixels whose ground-truth label is ignored are excluded entirely.
    """
    pred = as_label_map(pred)
    gt = as_label_map(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    ignore = {int(c) for c in ignore}
    valid = ~np.isin(gt, list(ignore)) if ignore else np.ones(gt.shape, dtype=bool)
    p, g = pred[valid], gt[valid]
    out = {}
    for c in np.union1d(np.unique(p), np.unique(g)):
        c = int(c)
        if c in ignore:
            continue
        pc, gc = p == c, g == c
        tp = int(np.count_nonzero(pc & gc))
        out[c] = (tp, int(np.count_nonzero(pc)) - tp, int(np.count_nonzero(gc)) - tp)
    return out


def scores(tp: int, fp: int, fn: int) -> dict:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    union = tp + fp + fn
    return {
        "precision": precision,
        "recall": recall,
        "f05": f_beta(precision, recall, 0.5),
        "f1": f_beta(precision, recall, 1.0),
        "iou": tp / union if union else 0.0,
    }


@dataclass
class ClassRow:
    image_id: str
    class_id: int
    tp: int
    fp: int
    fn: int
    in_gt: bool
    metrics: dict


@dataclass
class ImageSummary:
    image_id: str
    item_count: int | None
    # mean over ground-truth classes; None when the image has none
    means: dict | None


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    images: list = field(default_factory=list)
    class_names: dict = field(default_factory=dict)

    @property
    def dataset_means(self) -> dict:
        scored = [im.means for im in self.images if im.means is not None]
        if not scored:
            return {m: None for m in METRICS}
        return {m: float(np.mean([s[m] for s in scored])) for m in METRICS}

    def class_scores(self, metric="f05") -> dict:
        """Mean ``metric`` per class over the images whose GT contains it."""
        acc = defaultdict(list)
        for r in self.rows:
            if r.in_gt:
                acc[r.class_id].append(r.metrics[metric])
        return {c: float(np.mean(v)) for c, v in sorted(acc.items())}

    def summary(self) -> dict:
        return {
            "images": len(self.images),
            "scored_images": sum(im.means is not None for im in self.images),
            "mean": self.dataset_means,
            "per_image": [
                {"image_id": im.image_id, "item_count": im.item_count, "mean": im.means} for im in self.images
            ],
            "per_class_f05": {str(c): v for c, v in self.class_scores().items()},
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image_id", "class_id", "class_name", "in_gt", "tp", "fp", "fn", *METRICS])
            for r in self.rows:
                w.writerow([
                    r.image_id, r.class_id, self.class_names.get(r.class_id, ""), int(r.in_gt),
                    r.tp, r.fp, r.fn, *(repr(r.metrics[m]) for m in METRICS),
                ])

    def write_summary(self, path):
        save_json(self.summary(), path)


def report(preds, gts, registry=None, item_counts=None, image_ids=None, ignore=(0,)) -> EvalReport:
    """Score matched predictions against ground truth.

    ``preds`` and ``gts`` are either equal-length sequences or dicts keyed by
    image id; with dicts the key sets must agree.
    """
    if isinstance(preds, dict) or isinstance(gts, dict):
        if not (isinstance(preds, dict) and isinstance(gts, dict)):
            raise MissingPair("predictions and ground truth must both be keyed by image id")
        if set(preds) != set(gts):
            missing = sorted(set(preds) ^ set(gts))
            raise MissingPair(f"unmatched image ids: {missing}")
        image_ids = sorted(gts)
        preds = [preds[i] for i in image_ids]
        gts = [gts[i] for i in image_ids]
    else:
        preds, gts = list(preds), list(gts)
        if len(preds) != len(gts):
            raise MissingPair(f"{len(preds)} predictions for {len(gts)} ground-truth maps")
        image_ids = list(image_ids) if image_ids is not None else [f"{k:04d}" for k in range(len(gts))]
    if item_counts is None:
        counts = [None] * len(gts)
    elif isinstance(item_counts, dict):
        counts = [item_counts.get(i) for i in image_ids]
    else:
        counts = list(item_counts)

    names = {}
    if registry is not None:
        names = {cid: name for cid, name in registry.classes}
    rep = EvalReport(class_names=names)
    for image_id, pred, gt, count in zip(image_ids, preds, gts, counts):
        conf = confusion(pred, gt, ignore)
        gt_rows = []
        for cid, (tp, fp, fn) in sorted(conf.items()):
            row = ClassRow(str(image_id), cid, tp, fp, fn, tp + fn > 0, scores(tp, fp, fn))
            rep.rows.append(row)
            if row.in_gt:
                gt_rows.append(row)
        means = {m: float(np.mean([r.metrics[m] for r in gt_rows])) for m in METRICS} if gt_rows else None
        rep.images.append(ImageSummary(str(image_id), count, means))
    return rep


def clutter_curve(rep: EvalReport, metric="f05") -> list[tuple[int, float]]:
    """Mean per-image score grouped by item count, ascending in count."""
    groups = defaultdict(list)
    for im in rep.images:
        if im.means is not None and im.item_count is not None:
            groups[int(im.item_count)].append(im.means[metric])
    return [(n, float(np.mean(v))) for n, v in sorted(groups.items())]


def frequency_curve(rep: EvalReport, appearances: dict, metric="f05") -> list[tuple[int, float]]:
    """``(training appearances, class score)`` per GT class, in class-id order."""
    out = []
    for cid, score in rep.class_scores(metric).items():
        if cid not in appearances:
            raise UnknownClass(f"class {cid} has no training appearance count")
        out.append((int(appearances[cid]), score))
    return out


def write_curve_csv(points, path, header):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in points:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
