"""Command-line front end.

Subcommands: train, segment, eval, proposals, gradcheck, gendata.
Exit codes: 0 success, 1 user error, 2 internal error. stdout carries
machine-readable key=value or CSV lines; diagnostics go to stderr.
"""

import argparse
import math
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import load_config
from .data import gen_synthetic, load_dataset, save_dataset
from .errors import SpixelError
from .gradcheck import GRAD_TOL, run_suite
from .imageio import read_ppm, write_pgm16, write_ppm
from .imgops import bilinear_resize, nearest_resize, overlay_boundaries
from .labels import SuperpixelSegmentation
from .metrics import MetricReport, asa, boundary_metrics, format_metrics_csv, merge_proposals
from .model import build
from .segment import default_min_size, enforce_connectivity, hard_assign
from .svgplot import line_chart
from .train import train, write_loss_csv


class _Parser(argparse.ArgumentParser):
    """argparse with the exit-code contract (1 = user error)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _dims_for_count(h, w, S, n_target):
    """Image size whose S-grid has about n_target cells, snapped to S."""
    scale = math.sqrt(n_target * S * S / (h * w))
    nh = max(S, round(h * scale / S) * S)
    nw = max(S, round(w * scale / S) * S)
    return nh, nw


def _snap_dims(h, w, S):
    return max(S, round(h / S) * S), max(S, round(w / S) * S)


def segment_pipeline(model, img, n_superpixels=None):
    """Forward + decode, resizing so the grid matches the requested count.

    Returns (segmentation at original resolution, working-resolution count).
    """
    S = model.config.S
    h, w = img.shape[:2]
    if n_superpixels is None:
        nh, nw = _snap_dims(h, w, S)
    else:
        nh, nw = _dims_for_count(h, w, S, n_superpixels)
    work = img if (nh, nw) == (h, w) else bilinear_resize(img, nh, nw)
    q, _, _ = model.forward(work)
    grid = model.grid_for(nh, nw)
    seg = enforce_connectivity(hard_assign(q, grid), default_min_size(S))
    if (nh, nw) != (h, w):
        ids = nearest_resize(seg.ids, h, w)
        seg = enforce_connectivity(
            SuperpixelSegmentation(ids, int(np.unique(ids).size)), default_min_size(S)
        )
    return seg


def _load_model(ckpt_path):
    ckpt = load_checkpoint(ckpt_path)
    return ckpt.build_model(), ckpt


def _cmd_train(args):
    bundle = load_config(args.config)
    cfg = bundle.train
    if args.seed is not None:
        cfg.seed = args.seed
    if args.data:
        dataset = load_dataset(args.data)
    else:
        dataset = gen_synthetic(
            args.synthetic, bundle.size, bundle.regions, rng=cfg.seed
        )
    if not dataset:
        raise SpixelError(f"dataset at {args.data} is empty")
    model = build(bundle.model, rng=cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _, trace = train(model, dataset, cfg, checkpoint_path=out)
    loss_csv = out.parent / "loss.csv"
    write_loss_csv(trace, loss_csv)
    print(f"checkpoint={out}")
    print(f"loss_csv={loss_csv}")
    print(f"iterations={len(trace)}")
    print(f"final_loss={trace[-1].total:.9g}")
    return 0


def _cmd_segment(args):
    model, _ = _load_model(args.ckpt)
    img = read_ppm(args.image).astype(np.float64) / 255.0
    seg = segment_pipeline(model, img, args.n_superpixels)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_pgm16(f"{prefix}.labels.pgm", seg.ids)
    write_ppm(f"{prefix}.overlay.ppm", overlay_boundaries(img, seg.ids))
    print(f"superpixels={seg.count}")
    print(f"labels={prefix}.labels.pgm")
    print(f"overlay={prefix}.overlay.ppm")
    return 0


def _cmd_eval(args):
    model, _ = _load_model(args.ckpt)
    dataset = load_dataset(args.data)
    if not dataset:
        raise SpixelError(f"dataset at {args.data} is empty")
    counts = [int(c) for c in args.counts.split(",") if c.strip()]
    if not counts:
        raise SpixelError("--counts needs at least one integer")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for count in counts:
        asa_vals, br_vals, bp_vals, n_vals, times = [], [], [], [], []
        for sample in dataset:
            t0 = time.perf_counter()
            seg = segment_pipeline(model, sample.image, count)
            times.append((time.perf_counter() - t0) * 1000.0)
            asa_vals.append(asa(seg, sample.labels))
            br, bp = boundary_metrics(seg, sample.labels, tol=args.tol)
            br_vals.append(br)
            bp_vals.append(bp)
            n_vals.append(seg.count)
        reports.append(
            MetricReport(
                n_superpixels=round(float(np.mean(n_vals))),
                asa=float(np.mean(asa_vals)),
                br=float(np.mean(br_vals)),
                bp=float(np.mean(bp_vals)),
                runtime_ms=float(np.mean(times)),
            )
        )
    csv_text = format_metrics_csv(reports)
    (out_dir / "metrics.csv").write_text(csv_text, encoding="utf-8")
    xs = [r.n_superpixels for r in reports]
    line_chart(
        out_dir / "asa.svg",
        [("ASA", xs, [r.asa for r in reports])],
        "Achievable segmentation accuracy",
        "superpixels",
        "ASA",
    )
    line_chart(
        out_dir / "br_bp.svg",
        [("BR", xs, [r.br for r in reports]), ("BP", xs, [r.bp for r in reports])],
        f"Boundary recall / precision (tol={args.tol})",
        "superpixels",
        "fraction",
    )
    sys.stdout.write(csv_text)
    return 0


def _cmd_proposals(args):
    model, _ = _load_model(args.ckpt)
    img = read_ppm(args.image).astype(np.float64) / 255.0
    seg = segment_pipeline(model, img, args.n_superpixels)
    proposals = merge_proposals(seg, img, args.threshold)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_pgm16(f"{prefix}.labels.pgm", proposals.ids)
    write_ppm(f"{prefix}.overlay.ppm", overlay_boundaries(img, proposals.ids))
    print(f"superpixels={seg.count}")
    print(f"regions={proposals.n_regions}")
    return 0


def _cmd_gradcheck(args):
    results = run_suite(scope=args.scope)
    failed = False
    for name, err in results.items():
        print(f"{name} {err:.3e}")
        failed |= err > GRAD_TOL
    return 1 if failed else 0


def _cmd_gendata(args):
    dataset = gen_synthetic(args.n, args.size, args.regions, rng=args.seed)
    save_dataset(args.out, dataset)
    print(f"samples={len(dataset)}")
    print(f"dir={args.out}")
    return 0


def _build_parser():
    parser = _Parser(prog="spixel", description="Grid-association superpixel tool")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train a model", add_help=True)
    p.add_argument("--config", required=True, help="key = value config file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--data", help="dataset directory (NAME.ppm + NAME.labels.pgm)")
    group.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic samples")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(run=_cmd_train)

    p = sub.add_parser("segment", help="segment one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True, help="input PPM (P6)")
    p.add_argument("--n-superpixels", type=int, default=None)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(run=_cmd_segment)

    p = sub.add_parser("eval", help="metric sweep over a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--counts", required=True, help="comma-separated superpixel counts")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tol", type=int, default=2, help="boundary tolerance in pixels")
    p.set_defaults(run=_cmd_eval)

    p = sub.add_parser("proposals", help="merge superpixels into object proposals")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--n-superpixels", type=int, default=None)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(run=_cmd_proposals)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--scope", default="all", help="'all' or one op name")
    p.set_defaults(run=_cmd_gradcheck)

    p = sub.add_parser("gendata", help="write a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--regions", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=_cmd_gendata)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except (SpixelError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except Exception:  # pragma: no cover - internal failures
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
