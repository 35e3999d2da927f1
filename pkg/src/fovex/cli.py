"""Command-line entry point: ``fovex {train,explain,evaluate,render,dataset}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import pnm
from .attribution import build_map, render_heatmap, scanpath_weights
from .config import format_config, load_config
from .dataset_io import export_dataset, items_from_dataset, load_items, read_manifest, synthetic_gaze
from .errors import ArchitectureMismatch, ConfigError, DataError, FormatError, NumericalError, ShapeError
from .evaluation import METHODS, evaluate_batch, explain
from .predictor import accuracy, generate_synthetic, load_weights, save_weights, train_toy
from .scanpath import format_scanpath, read_scanpath
from .seeds import stream_seed

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

log = logging.getLogger("fovex")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _load_image(path, predictor):
    image = pnm.load_image(path)
    if image.shape != predictor.input_shape:
        raise ShapeError(f"{path}: image shape {image.shape} does not match predictor input {predictor.input_shape}")
    return image


def _datasets(cfg):
    if cfg.dataset_dir:
        manifest = os.path.join(cfg.dataset_dir, "manifest.csv")
        if not os.path.isdir(cfg.dataset_dir):
            raise DataError(f"dataset_dir does not exist: {cfg.dataset_dir}")
        items = load_items(read_manifest(manifest), cfg.n_classes)
        images = np.stack([it.image for it in items])
        labels = np.array([it.label for it in items])
        return _Arrays(images, labels, cfg.n_classes), None
    size = cfg.image_size
    train = generate_synthetic(stream_seed(cfg.seed, "train_data"), cfg.train_samples, size, cfg.n_classes, cfg.channels)
    test = generate_synthetic(stream_seed(cfg.seed, "test_data"), cfg.test_samples, size, cfg.n_classes, cfg.channels)
    return train, test


class _Arrays:
    def __init__(self, images, labels, n_classes):
        self.images, self.labels, self.n_classes = images, labels, n_classes


def cmd_train(args):
    cfg = _config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    train, test = _datasets(cfg)
    lines = ["epoch,loss"]

    def progress(epoch, loss):
        lines.append(f"{epoch + 1},{loss!r}")
        log.info("epoch %d loss %.6f", epoch + 1, loss)

    result = train_toy(cfg.training(), train, log=progress)
    save_weights(result.predictor, os.path.join(args.out_dir, "weights.fvx"))
    if test is not None:
        acc = accuracy(result.predictor, test.images, test.labels)
        lines.append(f"# held-out accuracy {acc!r}")
        log.info("held-out accuracy %.4f", acc)
        export_dataset(test, os.path.join(args.out_dir, "test"), synthetic_gaze(test, stream_seed(cfg.seed, "gaze")))
    _write(os.path.join(args.out_dir, "train_log.txt"), "\n".join(lines) + "\n")
    _write(os.path.join(args.out_dir, "config.txt"), format_config(cfg))
    return 0


def cmd_explain(args):
    cfg = _config(args)
    predictor = load_weights(args.weights)
    image = _load_image(args.image, predictor)
    os.makedirs(args.out_dir, exist_ok=True)
    amap, sp = explain(predictor, image, cfg)
    _write(os.path.join(args.out_dir, "scanpath.txt"), format_scanpath(sp))
    render_heatmap(amap, os.path.join(args.out_dir, "heatmap.pgm"), overlay=image,
                   overlay_path=os.path.join(args.out_dir, "overlay.ppm"))
    meta = {
        "image": os.path.basename(args.image),
        "predicted_class": int(predictor.predict(image)),
        "target": sp.target,
        "losses": sp.losses,
        "scores": sp.scores,
        "blurred_score": sp.base_score,
        "config": cfg.snapshot(),
    }
    _write(os.path.join(args.out_dir, "explain.json"), json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_evaluate(args):
    if args.method not in METHODS:
        raise UsageError(f"unknown method {args.method!r}; choose from {', '.join(METHODS)}")
    cfg = _config(args)
    predictor = load_weights(args.weights)
    items = load_items(read_manifest(args.manifest), predictor.n_classes)
    report = evaluate_batch(predictor, items, args.method, cfg, dataset_id=os.path.basename(os.path.dirname(os.path.abspath(args.manifest))))
    os.makedirs(args.out_dir, exist_ok=True)
    _write(os.path.join(args.out_dir, f"report_{args.method}.json"), report.to_text())
    for name, value in report.aggregate.items():
        print(f"{name}\t{value}")
    return 0


def cmd_render(args):
    cfg = _config(args)
    image = pnm.load_image(args.image)
    sp = read_scanpath(args.scanpath)
    if not len(sp):
        raise DataError(f"{args.scanpath}: empty scanpath")
    h, w = image.shape[1:]
    amap = build_map(sp, scanpath_weights(sp, "uniform"), cfg.sigma_attr(w), h, w)
    os.makedirs(args.out_dir, exist_ok=True)
    render_heatmap(amap, os.path.join(args.out_dir, "heatmap.pgm"), overlay=image,
                   overlay_path=os.path.join(args.out_dir, "overlay.ppm"))
    return 0


def cmd_dataset(args):
    cfg = _config(args)
    stream = "train_data" if args.split == "train" else "test_data"
    n = cfg.train_samples if args.split == "train" else cfg.test_samples
    ds = generate_synthetic(stream_seed(cfg.seed, stream), n, cfg.image_size, cfg.n_classes, cfg.channels)
    export_dataset(ds, args.out_dir, synthetic_gaze(ds, stream_seed(cfg.seed, "gaze")))
    return 0


def build_parser():
    parser = _Parser(prog="fovex", description="Foveation-based explanations for image classifiers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train the toy predictor")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="scanpath and attribution map for one image")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="score a method over a manifest")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", default="fovex", help="fovex or random_cam")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="heatmap and overlay from a scanpath file")
    common(p)
    p.add_argument("--scanpath", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("dataset", help="export a synthetic split with manifest")
    common(p)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.set_defaults(func=cmd_dataset)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"fovex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, ShapeError, ArchitectureMismatch, OSError) as exc:
        print(f"fovex: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"fovex: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
