"""Command-line front end.

Subcommands: scan-order, dwt, forward, train-spsa, eval, ablate-shape.
Exit codes: 0 success, 2 usage error, 1 runtime error. Output is plain
text or CSV with no timestamps, byte-identical for fixed flags and seeds.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import data_io, metrics, model, scan
from .frequency import dwt2_haar

SHAPE_SIDES = {
    "triangle": 3,
    "quadrilateral": 4,
    "pentagon": 5,
    "hexagon": 6,
    "octagon": 8,
}


def _parse_sides(value: str) -> int:
    if value in SHAPE_SIDES:
        return SHAPE_SIDES[value]
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{value!r} is not a shape name ({', '.join(SHAPE_SIDES)}) or an integer"
        )
    if n < 3:
        raise argparse.ArgumentTypeError(f"side count must be >= 3, got {n}")
    return n


def _parse_shape_list(value: str) -> list[str]:
    names = [s.strip() for s in value.split(",") if s.strip()]
    if not names:
        raise argparse.ArgumentTypeError("at least one shape name is required")
    for name in names:
        if name not in SHAPE_SIDES:
            raise argparse.ArgumentTypeError(
                f"unknown shape {name!r}; choose from {', '.join(SHAPE_SIDES)}"
            )
    return names


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polymamba")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan-order", help="emit a polygon scan permutation")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--sides", type=_parse_sides, required=True, help="shape name or integer >= 3")
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--scale-step", type=float, default=1.0)
    p.add_argument("--variant", choices=scan.VARIANTS, default="rot0")
    p.add_argument("--out", help="write the two-line text form here")
    p.add_argument("--ppm", help="write a visit-rank hue heat map here (P6)")

    p = sub.add_parser("dwt", help="one-level Haar analysis of a tensor file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("forward", help="run inference on a P5 image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-spsa", help="train the micro model on synthetic data")
    p.add_argument("--config", required=True, help="key=value model config file")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--images", type=int, default=4, help="synthetic training pairs")
    p.add_argument("--size", type=int, default=16, help="synthetic image size")
    p.add_argument("--step-size", type=float, default=0.5)
    p.add_argument("--perturb-size", type=float, default=0.05)
    p.add_argument("--fig", help="write a loss-curve figure here")

    p = sub.add_parser("eval", help="confusion metrics CSV for a prediction")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", help="optional field-of-view mask tensor")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--fig", help="write a ROC figure here")

    p = sub.add_parser("ablate-shape", help="train and score each scan shape")
    p.add_argument(
        "--shapes",
        type=_parse_shape_list,
        default=list(SHAPE_SIDES),
        help="comma-separated shape names",
    )
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-images", type=int, default=2)
    p.add_argument("--eval-images", type=int, default=1)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--fig", help="write a per-shape bar chart here")
    return parser


def _cmd_scan_order(args) -> int:
    spec = scan.PolygonSpec(n_sides=args.sides, theta=args.theta, scale_step=args.scale_step)
    so = scan.scan_order(args.height, args.width, spec, args.variant)
    print(" ".join(str(int(i)) for i in so.order))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(scan.dump_scan_order(so))
    if args.ppm:
        data_io.write_ppm(args.ppm, scan.heatmap_rgb(so))
    return 0


def _cmd_dwt(args) -> int:
    t = data_io.read_tensor(args.input)
    if t.ndim == 2:
        t = t[None]
    if t.ndim != 3:
        raise ValueError(f"dwt expects a rank-2 or rank-3 tensor, got rank {t.ndim}")
    bands = dwt2_haar(t)
    for suffix, band in (("ll", bands.ll), ("lh", bands.lh), ("hl", bands.hl), ("hh", bands.hh)):
        data_io.write_tensor(f"{args.out_prefix}.{suffix}", band)
    return 0


def _cmd_forward(args) -> int:
    store, cfg = model.load_checkpoint(args.checkpoint)
    image = data_io.read_pgm(args.input)
    padded, (h, w) = data_io.pad_to_multiple(image, 2**cfg.levels)
    prob = model.forward(padded, store, cfg)[:, :h, :w]
    data_io.write_tensor(args.out, prob)
    return 0


def _synth_set(seed: int, count: int, size: int):
    return [data_io.synth_vessels(seed + i, size=size) for i in range(count)]


def _cmd_train_spsa(args) -> int:
    with open(args.config) as fh:
        cfg = model.config_from_text(fh.read())
    dataset = _synth_set(args.seed, args.images, args.size)
    store = model.init_params(cfg)
    store, trace = model.spsa_train(
        dataset,
        store,
        cfg,
        steps=args.steps,
        step_size=args.step_size,
        perturb_size=args.perturb_size,
        seed=args.seed,
    )
    model.save_checkpoint(args.out, store, cfg)
    print("step,loss")
    for k, loss in enumerate(trace):
        print(f"{k},{loss!r}")
    if args.fig:
        from . import report

        report.save_loss_curve(trace, args.fig)
    return 0


def _load_eval_tensor(path) -> np.ndarray:
    t = data_io.read_tensor(path)
    return t[0] if t.ndim == 3 and t.shape[0] == 1 else t


def _cmd_eval(args) -> int:
    pred = _load_eval_tensor(args.pred)
    gt = _load_eval_tensor(args.gt)
    fov = _load_eval_tensor(args.mask) if args.mask else None
    counts = metrics.confusion(pred, gt, args.threshold, fov=fov)
    report_row = metrics.basic_metrics(counts)
    scores = pred.ravel() if fov is None else pred[fov != 0].ravel()
    labels = gt.ravel() if fov is None else gt[fov != 0].ravel()
    fpr = tpr = None
    try:
        fpr, tpr = metrics.roc_points(scores, labels)
        report_row.auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) * 0.5))
    except metrics.UndefinedMetricError:
        report_row.auc = None
    print(metrics.csv_header())
    print(metrics.csv_row(report_row))
    if args.fig and fpr is not None:
        from . import report

        report.save_roc_curve(fpr, tpr, report_row.auc, args.fig)
    return 0


def _cmd_ablate_shape(args) -> int:
    names = args.shapes
    train_set = _synth_set(args.seed, args.train_images, args.size)
    eval_set = _synth_set(args.seed + 1000, args.eval_images, args.size)
    print("shape," + metrics.csv_header())
    reports = []
    for name in names:
        cfg = model.micro_config(seed=args.seed, n_sides=SHAPE_SIDES[name])
        store = model.init_params(cfg)
        store, _ = model.spsa_train(dataset=train_set, params=store, cfg=cfg, steps=args.steps, seed=args.seed)
        preds = [model.forward(pair.image, store, cfg) for pair in eval_set]
        scores = np.concatenate([p.ravel() for p in preds])
        labels = np.concatenate([pair.mask.ravel() for pair in eval_set])
        counts = metrics.ConfusionCounts(0, 0, 0, 0)
        for p, pair in zip(preds, eval_set):
            c = metrics.confusion(p, pair.mask, args.threshold)
            counts = metrics.ConfusionCounts(
                counts.tp + c.tp, counts.fp + c.fp, counts.tn + c.tn, counts.fn + c.fn
            )
        row = metrics.basic_metrics(counts)
        try:
            row.auc = metrics.roc_auc(scores, labels)
        except metrics.UndefinedMetricError:
            row.auc = None
        reports.append(row)
        print(f"{name}," + metrics.csv_row(row))
    if args.fig:
        from . import report

        report.save_shape_bars(names, reports, args.fig)
    return 0


_COMMANDS = {
    "scan-order": _cmd_scan_order,
    "dwt": _cmd_dwt,
    "forward": _cmd_forward,
    "train-spsa": _cmd_train_spsa,
    "eval": _cmd_eval,
    "ablate-shape": _cmd_ablate_shape,
}


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # runtime errors: report and exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    console_main()
