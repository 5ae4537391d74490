"""``djf`` command line: gen, train, detect, eval."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .dataset import (QF_GRID, SCALES, load_image_records, make_special_dataset,
                      make_synthetic_dataset)
from .formats import write_djfv, write_pgm
from .jpeg_codec import JpegParseError
from .localization import binarize, detect, evaluate_grid
from .msd_net import DEFAULT_THRESHOLD, DEFAULT_WEIGHTS, load_msd, save_msd, train_msd
from .nn_core import ModelFormatError, TrainConfig

log = logging.getLogger("djf")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _pairs(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        a, b = item.split(":")
        out.append((int(a), int(b)))
    return out


def _echo_config(args) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    print("config: " + json.dumps(cfg, sort_keys=True, default=str))


def _limit_threads():
    value = os.environ.get("DJF_THREADS")
    if value:
        from threadpoolctl import threadpool_limits
        threadpool_limits(max(1, int(value)))


def cmd_gen(args) -> int:
    if args.synthesize:
        images = corpus_mod.synthesize_corpus(args.synthesize, seed=args.seed)
        names = [f"syn{i:04d}" for i in range(len(images))]
    else:
        images, names = corpus_mod.load_corpus(args.corpus)
    grid = args.pairs if args.pairs else args.qf_grid
    out = Path(args.out_dir)
    manifests = make_synthetic_dataset(images, grid, args.scales, out, names=names, seed=args.seed,
                                       val_fraction=args.val_fraction)
    for scale, path in manifests.items():
        print(f"manifest {scale}: {path}")
    if args.special:
        special_grid = args.special_pairs or grid
        path = make_special_dataset(images, special_grid, out, names=names, seed=args.seed,
                                    val_fraction=args.val_fraction)
        print(f"manifest special: {path}")
    return 0


def cmd_train(args) -> int:
    data = Path(args.data_dir)
    manifests = {}
    for key in (64, 128, 256, "special"):
        path = data / f"manifest_{key}.csv"
        if not path.exists():
            print(f"error: missing manifest {path}", file=sys.stderr)
            return 2
        manifests[key] = path
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch, momentum=args.momentum,
                      epochs=args.epochs, seed=args.seed)
    log_path = Path(args.log) if args.log else Path(str(args.out_model) + ".log.csv")
    fields = ["network", "epoch", "batch_size", "train_loss", "train_acc", "val_loss", "val_acc"]
    with open(log_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()

        def on_epoch(row):
            writer.writerow({k: row.get(k, "") for k in fields})
            fh.flush()
            print(f"{row['network']} epoch {row['epoch']}: loss={row['train_loss']:.4f} "
                  f"acc={row['train_acc']:.4f} val_acc={row.get('val_acc', float('nan')):.4f}")

        model = train_msd(manifests, cfg, weights=args.weights, threshold=args.t, log_fn=on_epoch)
    save_msd(model, args.out_model)
    print(f"model: {args.out_model}")
    print(f"log: {log_path}")
    return 0


def cmd_detect(args) -> int:
    model = load_msd(args.model)
    det = detect(model, Path(args.image).read_bytes(), use_special=not args.no_special)
    prefix = str(args.out_prefix)
    write_pgm(prefix + ".map.pgm", np.rint(255 * det.prob_map).astype(np.uint8))
    write_djfv(prefix + ".map.f32", det.prob_map)
    write_pgm(prefix + ".mask.pgm", binarize(det.prob_map, args.threshold) * 255)
    write_pgm(prefix + ".route.pgm", det.route_map * 255)
    print(f"windows={det.n_windows} special_fraction={det.special_fraction:.6f} "
          f"mean_probability={det.mean_probability:.6f} route_threshold={model.threshold:.6f}")
    return 0


def cmd_eval(args) -> int:
    model = load_msd(args.model)
    records = load_image_records(args.manifest)
    if args.split:
        records = [r for r in records if r.get("split") == args.split]
    if not records:
        print("error: no records", file=sys.stderr)
        return 2
    report = evaluate_grid(model, records, Path(args.manifest).parent, threshold=args.threshold,
                           use_special=not args.no_special)
    paths = report.write_csv(args.out_csv)
    for err in report.errors:
        print(f"warning: {err}", file=sys.stderr)
    print(f"images={len(report.rows)} errors={len(report.errors)} route_threshold={model.threshold:.6f} "
          "positive_class=doubly-compressed")
    for (q1, q2), r in sorted(report.cells.items()):
        print(f"qf1={q1} qf2={q2} acc={r.acc} f1={r.f1} tamper_f1={r.tamper_f1}")
    print("outputs: " + ", ".join(str(p) for p in paths))
    return 0 if not report.errors else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="djf", description="Double-JPEG tamper detection and localization.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="build tampered-image block datasets")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="directory of 8-bit PGM originals")
    src.add_argument("--synthesize", type=int, metavar="N", help="use N procedural images")
    g.add_argument("out_dir")
    g.add_argument("--qf-grid", type=_int_list, default=list(QF_GRID))
    g.add_argument("--pairs", type=_pairs, help="explicit qf1:qf2 pairs, overrides --qf-grid")
    g.add_argument("--scales", type=_int_list, default=list(SCALES))
    g.add_argument("--special", action="store_true", help="also build the special (qf1 > qf2) set")
    g.add_argument("--special-pairs", type=_pairs, help="qf1:qf2 pairs for the special set")
    g.add_argument("--val-fraction", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the four networks")
    t.add_argument("data_dir")
    t.add_argument("out_model")
    t.add_argument("--lr", type=float, default=0.0005)
    t.add_argument("--batch", type=int, default=200)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--t", type=float, default=DEFAULT_THRESHOLD, help="routing threshold")
    t.add_argument("--weights", type=_float_list, default=list(DEFAULT_WEIGHTS))
    t.add_argument("--log", help="per-epoch CSV log (default: <out_model>.log.csv)")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("detect", help="tamper probability map for one JPEG")
    d.add_argument("model")
    d.add_argument("image")
    d.add_argument("out_prefix")
    d.add_argument("--threshold", type=float, default=0.5)
    d.add_argument("--no-special", action="store_true")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score detections over an images.csv manifest")
    e.add_argument("model")
    e.add_argument("manifest")
    e.add_argument("out_csv")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--split", help="only records of this split (train/val)")
    e.add_argument("--no-special", action="store_true")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _limit_threads()
    _echo_config(args)
    try:
        return args.func(args)
    except (OSError, ValueError, JpegParseError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
