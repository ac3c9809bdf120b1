"""Command-line entry point: ``segmeld <subcommand> ...``.

Every subcommand reads an optional JSON config (``--config``) whose section
named after the subcommand supplies defaults; explicit flags win. Diagnostics
go to stderr, machine outputs only to the declared paths. Exit status is 0 on
success and 1 on any handled error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import annotate_capture, review_queue
from .embed import EmbeddingNet, load_net, save_net
from .errors import ConfigError, EmptyMask, IoFailure, MissingPair, SegmeldError
from .evalkit import clutter_curve, frequency_curve, report, write_curve_csv
from .features import DESCRIPTOR_DIM
from .gallery import Gallery, enroll, load_gallery, save_gallery
from .hierarchy import HierarchyConfig, export_proposals, extract_proposals
from .pipeline import segment_image
from .plotting import plot_clutter_curve, plot_frequency_curve, plot_loss_trace
from .raster import (
    ClassRegistry,
    ensure_dir,
    load_json,
    load_registry,
    read_pgm16,
    read_ppm,
    save_json,
    write_pgm16,
    write_ppm,
)
from .synth import SceneSpec, generate_capture, generate_scene
from .train import TrainConfig, dataset_from_dir, train
from .vote import read_scores, restricted_argmax

log = logging.getLogger("segmeld")


# -- helpers -------------------------------------------------------------------

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SEGMELD_THREADS", "1")))
    except ValueError:
        raise ConfigError("SEGMELD_THREADS must be an integer")


def _section(args, name) -> dict:
    if not getattr(args, "config", None):
        return {}
    doc = load_json(args.config)
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return sec


def _pick(flag, section, key, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def _required(value, what):
    if value is None:
        raise ConfigError(f"missing {what} (flag or config)")
    return value


def _id_list(value):
    if value is None:
        return None
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
        try:
            return [int(p) for p in parts]
        except ValueError:
            raise ConfigError(f"expected comma-separated class ids, got {value!r}")
    return [int(v) for v in value]


def _float_list(value):
    if value is None:
        return None
    if isinstance(value, str):
        try:
            return [float(p) for p in value.split(",") if p.strip()]
        except ValueError:
            raise ConfigError(f"expected comma-separated numbers, got {value!r}")
    return [float(v) for v in value]


def _hierarchy_cfg(args, sec) -> HierarchyConfig:
    kw = {}
    th = _float_list(_pick(args.thresholds, sec, "thresholds"))
    if th is not None:
        kw["thresholds"] = th
    for key in ("min_area_fraction", "max_area_fraction"):
        if key in sec:
            kw[key] = float(sec[key])
    return HierarchyConfig(**kw)


def _registry_from(sec) -> ClassRegistry:
    if "registry" in sec:
        reg = sec["registry"]
        return load_registry(reg) if isinstance(reg, str) else ClassRegistry.from_json(reg)
    if "classes" in sec:
        return ClassRegistry.from_names(sec["classes"])
    raise ConfigError("gen-synth config needs 'classes' (names) or 'registry'")


def _seed_for(base, *path) -> int:
    return int(np.random.SeedSequence([int(base), *path]).generate_state(1)[0])


def _write_scene(out_dir, stem, scene):
    write_ppm(scene.image, out_dir / f"{stem}.ppm")
    write_pgm16(scene.labels, out_dir / f"{stem}.labels.pgm")
    write_pgm16(scene.boundary, out_dir / f"{stem}.boundary.pgm")
    return {"id": stem, "item_count": scene.item_count, "present": sorted(scene.present)}


def _resolve_items(items, registry):
    out = []
    for it in items:
        if isinstance(it, int):
            out.append(it)
        elif isinstance(it, str) and it.isdigit():
            out.append(int(it))
        else:
            if registry is None:
                raise ConfigError(f"item name {it!r} needs a registry to resolve")
            try:
                out.append(registry.id_of(it))
            except KeyError:
                raise ConfigError(f"unknown item name {it!r}")
    return out


# -- subcommands -----------------------------------------------------------------

def cmd_gen_synth(args):
    sec = _section(args, "gen-synth")
    out = ensure_dir(_required(_pick(args.out, sec, "out"), "output directory"))
    registry = _registry_from(sec)
    spec = SceneSpec.from_json(dict(sec.get("scene", {})))
    seed = int(_pick(args.seed, sec, "seed", spec.seed))
    spec = spec.with_seed(seed)
    save_json(registry.to_json(), out / "registry.json")
    save_json(spec.to_json(), out / "scene_spec.json")

    n_scenes = int(sec.get("scenes", 10))
    test_dir = ensure_dir(out / "test")
    records = []
    sweep = sec.get("item_counts")
    if sweep:
        for count in sweep:
            group = []
            for i in range(n_scenes):
                sc = generate_scene(spec.with_seed(_seed_for(seed, 1, count, i)), registry, item_count=int(count))
                group.append(_write_scene(test_dir, f"n{int(count):02d}_{i:04d}", sc))
            save_json({"scenes": group}, test_dir / f"manifest_items_{int(count):02d}.json")
            records += group
    else:
        for i in range(n_scenes):
            sc = generate_scene(spec.with_seed(_seed_for(seed, 1, i)), registry)
            records.append(_write_scene(test_dir, f"scene_{i:04d}", sc))
    save_json({"scenes": records}, test_dir / "manifest.json")

    n_train = int(sec.get("train_scenes", 0))
    if n_train:
        train_dir = ensure_dir(out / "train")
        train_reg = registry
        if "train_classes" in sec:
            keep = set(_resolve_items(sec["train_classes"], registry))
            train_reg = ClassRegistry(tuple(c for c in registry.classes if c[0] in keep))
        recs = [
            _write_scene(train_dir, f"train_{i:04d}", generate_scene(spec.with_seed(_seed_for(seed, 2, i)), train_reg))
            for i in range(n_train)
        ]
        save_json({"scenes": recs}, train_dir / "manifest.json")

    cap = sec.get("captures")
    if cap:
        _gen_captures(out, registry, spec, seed, cap)
    print(f"wrote {len(records)} scenes to {test_dir}", file=sys.stderr)
    return 0


def _gen_captures(out, registry, spec, seed, cap):
    cap_dir = ensure_dir(out / "captures")
    views = int(cap.get("views", 7))
    per = int(cap.get("items_per_capture", 1))
    ids = _resolve_items(cap.get("classes", registry.ids), registry)
    cap_spec = SceneSpec.from_json({**spec.to_json(), **cap.get("scene", {})})
    groups = [ids[k:k + per] for k in range(0, len(ids), per)]
    entries = []
    for g, group in enumerate(groups):
        for v in range(views):
            sc = generate_capture(cap_spec.with_seed(_seed_for(seed, 3, g, v)), registry, group)
            stem = f"cap_{g:03d}_{v:02d}"
            write_ppm(sc.image, cap_dir / f"{stem}.ppm")
            write_pgm16(sc.labels > 0, cap_dir / f"{stem}.mask.pgm")
            write_pgm16(sc.labels, cap_dir / f"{stem}.labels.pgm")
            entries.append({
                "id": stem,
                "image": f"{stem}.ppm",
                "mask": f"{stem}.mask.pgm",
                "labels": f"{stem}.labels.pgm",
                "items": [registry.name(c) for c in group],
                "class_ids": list(group),
            })
    save_json({"registry": "../registry.json", "captures": entries}, cap_dir / "manifest.json")


def cmd_train(args):
    sec = _section(args, "train")
    data = Path(_required(_pick(args.data, sec, "data"), "data directory"))
    out = Path(_required(_pick(args.out, sec, "out"), "output net path"))
    if not data.is_dir():
        raise IoFailure(f"data directory {data} does not exist")
    fields = {k: v for k, v in sec.items() if k in TrainConfig.__dataclass_fields__}
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.epochs is not None:
        fields["epochs"] = args.epochs
    cfg = TrainConfig.from_json(fields)
    hidden = [int(h) for h in sec.get("hidden", [32])]
    dim = int(sec.get("dim", 8))
    ds = dataset_from_dir(data, include_background=bool(sec.get("include_background", True)))
    net = EmbeddingNet.init([DESCRIPTOR_DIM, *hidden, dim], seed=int(sec.get("init_seed", cfg.seed)))
    net, trace = train(net, ds, cfg)
    if out.parent and str(out.parent) not in ("", "."):
        ensure_dir(out.parent)
    save_net(net, out)
    loss_csv = Path(_pick(args.loss_csv, sec, "loss_csv", str(out.with_suffix(".loss.csv"))))
    write_curve_csv([(e, v) for e, v in enumerate(trace)], loss_csv, ["epoch", "mean_combined_loss"])
    plot_loss_trace(trace, loss_csv.with_suffix(".png"))
    print(f"trained on {len(ds)} patches from {len(ds.classes)} classes; net -> {out}", file=sys.stderr)
    return 0


def _load_captures(cap_dir, registry=None):
    cap_dir = Path(cap_dir)
    man_path = cap_dir / "manifest.json"
    if not man_path.exists():
        raise IoFailure(f"captures manifest {man_path} not found")
    doc = load_json(man_path)
    if registry is None and isinstance(doc.get("registry"), str):
        reg_path = cap_dir / doc["registry"]
        if reg_path.exists():
            registry = load_registry(reg_path)
    return doc.get("captures", []), registry


def cmd_enroll(args):
    sec = _section(args, "enroll")
    net = load_net(_required(_pick(args.net, sec, "net"), "net path"))
    cap_dir = Path(_required(_pick(args.captures, sec, "captures"), "captures directory"))
    out = _required(_pick(args.out, sec, "out"), "gallery output path")
    views = int(_pick(args.views, sec, "views", 7))
    bg_views = int(_pick(args.background_views, sec, "background_views", views))
    registry = load_registry(args.registry) if args.registry else None
    captures, registry = _load_captures(cap_dir, registry)

    gallery = Gallery(dim=net.output_dim)
    taken = {}
    for n, entry in enumerate(captures):
        image = read_ppm(cap_dir / entry["image"])
        ids = _resolve_items(entry.get("class_ids") or entry.get("items", []), registry)
        if "labels" in entry:
            src = cap_dir / entry["labels"]
            labels = read_pgm16(src, kind="label")
        else:
            src = cap_dir / entry["mask"]
            if len(ids) != 1:
                raise ConfigError(f"{src}: mask-only captures must hold exactly one item")
            labels = read_pgm16(src, kind="mask").astype(np.int32) * ids[0]
        for cid in ids or sorted(int(c) for c in np.unique(labels) if c):
            if taken.get(cid, 0) >= views:
                continue
            mask = labels == cid
            if not mask.any():
                raise EmptyMask(f"{src}: empty mask for class {cid}")
            gallery = enroll(gallery, image, mask, cid, net)
            taken[cid] = taken.get(cid, 0) + 1
        if n < bg_views and np.any(labels == 0):
            gallery = enroll(gallery, image, labels == 0, 0, net)
    save_gallery(gallery, out)
    print(f"gallery with {len(gallery)} entries -> {out}", file=sys.stderr)
    return 0


def _segment_one(net, gallery, image_path, boundary_path, expected, k, hcfg, out_path, dump=None):
    image = read_ppm(image_path)
    boundary = read_pgm16(boundary_path, kind="boundary")
    if dump:
        export_proposals(extract_proposals(boundary, hcfg), dump)
    labels = segment_image(net, gallery, image, boundary, expected, k, hcfg)
    write_pgm16(labels, out_path)
    return labels


def cmd_segment(args):
    sec = _section(args, "segment")
    net = load_net(_required(_pick(args.net, sec, "net"), "net path"))
    gallery = load_gallery(_required(_pick(args.gallery, sec, "gallery"), "gallery path"))
    k = int(_pick(args.k, sec, "k", 3))
    hcfg = _hierarchy_cfg(args, sec)
    expected = _id_list(_pick(args.expected, sec, "expected"))
    if args.no_filter:
        expected = None
    scenes = _pick(args.scenes, sec, "scenes")
    out = _required(_pick(args.out, sec, "out"), "output path")

    if scenes:
        scene_dir = Path(scenes)
        out_dir = ensure_dir(out)
        manifest = load_json(scene_dir / "manifest.json")["scenes"]

        def run(rec):
            exp = None if args.no_filter else (expected if expected is not None else rec["present"] or [0])
            return _segment_one(
                net, gallery, scene_dir / f"{rec['id']}.ppm", scene_dir / f"{rec['id']}.boundary.pgm",
                exp, k, hcfg, out_dir / f"{rec['id']}.labels.pgm",
            )

        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            list(pool.map(run, manifest))
        print(f"segmented {len(manifest)} scenes -> {out_dir}", file=sys.stderr)
        return 0

    image = _required(_pick(args.image, sec, "image"), "image path")
    boundary = _required(_pick(args.boundary, sec, "boundary"), "boundary map path")
    _segment_one(net, gallery, image, boundary, expected, k, hcfg, out, _pick(args.dump_proposals, sec, "dump_proposals"))
    return 0


def cmd_fuse_scores(args):
    sec = _section(args, "fuse-scores")
    scores = read_scores(_required(_pick(args.scores, sec, "scores"), "score directory"))
    expected = _id_list(_pick(args.expected, sec, "expected"))
    if expected is None:
        expected = scores.class_ids
    out = _required(_pick(args.out, sec, "out"), "output path")
    write_pgm16(restricted_argmax(scores, expected), out)
    return 0


def _label_files(directory):
    d = Path(directory)
    if not d.is_dir():
        raise IoFailure(f"directory {d} does not exist")
    return {p.name[: -len(".labels.pgm")]: p for p in sorted(d.glob("*.labels.pgm"))}


def cmd_evaluate(args):
    sec = _section(args, "evaluate")
    pred_files = _label_files(_required(_pick(args.pred, sec, "pred"), "prediction directory"))
    gt_dir = Path(_required(_pick(args.gt, sec, "gt"), "ground-truth directory"))
    gt_files = _label_files(gt_dir)
    if set(pred_files) != set(gt_files):
        raise MissingPair(f"unmatched image ids: {sorted(set(pred_files) ^ set(gt_files))}")
    reg_path = _pick(args.registry, sec, "registry")
    registry = load_registry(reg_path) if reg_path else None
    out = ensure_dir(_required(_pick(args.out, sec, "out"), "output directory"))
    ignore = _id_list(_pick(args.ignore, sec, "ignore", "0"))

    counts = {}
    if (gt_dir / "manifest.json").exists():
        counts = {r["id"]: r.get("item_count") for r in load_json(gt_dir / "manifest.json")["scenes"]}
    preds = {i: read_pgm16(p) for i, p in pred_files.items()}
    gts = {i: read_pgm16(p) for i, p in gt_files.items()}
    rep = report(preds, gts, registry, counts, ignore=ignore)
    rep.write_csv(out / "report.csv")
    rep.write_summary(out / "summary.json")
    curve = clutter_curve(rep)
    write_curve_csv(curve, out / "clutter_curve.csv", ["item_count", "mean_f05"])
    plot_clutter_curve(curve, out / "clutter_curve.png")

    app_path = _pick(args.appearances, sec, "appearances")
    if app_path:
        apps = {int(k): int(v) for k, v in load_json(app_path).items()}
        freq = frequency_curve(rep, apps)
        ids = list(rep.class_scores())
        write_curve_csv([(c, a, s) for c, (a, s) in zip(ids, freq)], out / "frequency_curve.csv",
                        ["class_id", "appearances", "f05"])
        plot_frequency_curve(freq, out / "frequency_curve.png")
    mean = rep.dataset_means["f05"]
    print(f"mean F0.5 over {len(rep.images)} images: {mean}", file=sys.stderr)
    return 0


def cmd_annotate(args):
    sec = _section(args, "annotate")
    mask_dir = Path(_required(_pick(args.masks, sec, "masks"), "mask directory"))
    manifest = Path(_pick(args.manifest, sec, "manifest", str(mask_dir / "manifest.json")))
    out = ensure_dir(_required(_pick(args.out, sec, "out"), "output directory"))
    min_area = _pick(args.min_area, sec, "min_area")
    registry = load_registry(args.registry) if args.registry else None
    doc = load_json(manifest)
    if registry is None and isinstance(doc.get("registry"), str) and (manifest.parent / doc["registry"]).exists():
        registry = load_registry(manifest.parent / doc["registry"])

    results = []
    for entry in doc.get("captures", []):
        labels = _resolve_items(entry["items"], registry)
        if len(labels) != 2:
            raise ConfigError(f"{entry['mask']}: annotate expects two items per capture")
        fg = read_pgm16(mask_dir / entry["mask"], kind="mask")
        res = annotate_capture(entry["mask"], fg, labels, None if min_area is None else int(min_area))
        results.append(res)
        if res.ok:
            stem = entry.get("id") or Path(entry["mask"]).name.split(".")[0]
            write_pgm16(res.label_map, out / f"{stem}.labels.pgm")
    queue = review_queue(results)
    save_json({"review": queue}, out / "review_queue.json")
    print(f"{len(results) - len(queue)} captures labelled, {len(queue)} queued for review", file=sys.stderr)
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="segmeld", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"segmeld {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="JSON config with a section per subcommand")
        sp.add_argument("--out", help="output path or directory")
        sp.set_defaults(func=func)
        return sp

    sp = add("gen-synth", cmd_gen_synth, "generate synthetic scenes, ground truth and captures")
    sp.add_argument("--seed", type=int)

    sp = add("train", cmd_train, "train the embedding net on labelled scenes")
    sp.add_argument("--data", help="directory of <id>.ppm / <id>.labels.pgm pairs")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--loss-csv", dest="loss_csv")

    sp = add("enroll", cmd_enroll, "build a k-NN gallery from item captures")
    sp.add_argument("--net")
    sp.add_argument("--captures")
    sp.add_argument("--registry")
    sp.add_argument("--views", type=int, help="views enrolled per class (default 7)")
    sp.add_argument("--background-views", dest="background_views", type=int)

    sp = add("segment", cmd_segment, "segment an image (or a scene directory) with the gallery")
    sp.add_argument("--net")
    sp.add_argument("--gallery")
    sp.add_argument("--image")
    sp.add_argument("--boundary")
    sp.add_argument("--scenes", help="scene directory with manifest.json; --out is then a directory")
    sp.add_argument("--expected", help="comma-separated class ids known to be present")
    sp.add_argument("--no-filter", dest="no_filter", action="store_true", help="disable the expected-class filter")
    sp.add_argument("--k", type=int)
    sp.add_argument("--thresholds", help="comma-separated hierarchy levels")
    sp.add_argument("--dump-proposals", dest="dump_proposals")

    sp = add("fuse-scores", cmd_fuse_scores, "restricted argmax over external per-class score maps")
    sp.add_argument("--scores")
    sp.add_argument("--expected")

    sp = add("evaluate", cmd_evaluate, "score predictions against ground truth")
    sp.add_argument("--pred")
    sp.add_argument("--gt")
    sp.add_argument("--registry")
    sp.add_argument("--appearances", help="JSON {class_id: training appearances}")
    sp.add_argument("--ignore", help="comma-separated ground-truth ids to ignore (default 0)")

    sp = add("annotate", cmd_annotate, "split two-item capture masks and queue failures")
    sp.add_argument("--masks")
    sp.add_argument("--manifest")
    sp.add_argument("--registry")
    sp.add_argument("--min-area", dest="min_area", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SegmeldError as exc:
        print(f"segmeld {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (KeyError, TypeError, ValueError) as exc:
        # malformed manifests and configs surface here
        print(f"segmeld {args.command}: invalid input: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
