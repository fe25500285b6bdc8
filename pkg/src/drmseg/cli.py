"""Command-line driver.

``drmseg segment`` runs decode -> initialize -> merge and writes the label
map, a mean-color rendering, a boundary overlay, the JSON report, the
per-iteration counters as CSV and two figures. ``drmseg eval`` scores a
label map against ground-truth boundary maps. ``drmseg fixture`` writes the
synthetic four-quadrant test image with its ground truth.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bencheval import BoundaryMap, boundary_of, gen_quadrants, match_prf
from .drm import DrmConfig, run
from .initseg import InitSegConfig, initial_segmentation
from .pixelcore import (
    LabelMap,
    RgbImage,
    decode_label_map,
    decode_pgm,
    decode_ppm,
    encode_pgm8,
    encode_pgm16,
    encode_ppm,
)
from .report import build_report, counters_csv, dumps_report, plot_counters, plot_degree_histogram
from .sprt import SprtConfig

log = logging.getLogger("drmseg")

_ENGINES = {"baseline": "baseline", "nng": "nngAccelerated"}
_POLICIES = {"level": "level", "global-min": "globalMin"}


def _default_seed() -> int:
    raw = os.environ.get("DRM_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"DRM_SEED must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drmseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment one or more PPM images")
    seg.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="PPM")
    seg.add_argument("--out", required=True, help="output path prefix")
    seg.add_argument("--init", choices=("watershed", "grid", "external"), default="watershed")
    seg.add_argument("--labels", help="16-bit PGM label map for --init external")
    seg.add_argument("--grid-block", type=int, default=16)
    seg.add_argument("--median-radius", type=int, default=1)
    seg.add_argument("--quant-levels", type=int, default=256)
    seg.add_argument("--lambda1", type=float, default=2.0)
    seg.add_argument("--lambda2", type=float, default=1.0)
    seg.add_argument("--alpha", type=float, default=0.05)
    seg.add_argument("--beta", type=float, default=0.05)
    seg.add_argument("--n0", type=int, default=10)
    seg.add_argument("--prob-floor", type=float, default=1e-6)
    seg.add_argument("--covar-reg", type=float, default=1.0)
    seg.add_argument("--max-samples", type=int, default=4096)
    seg.add_argument("--deterministic", action="store_true")
    seg.add_argument("--engine", choices=tuple(_ENGINES), default="nng")
    seg.add_argument("--policy", choices=tuple(_POLICIES), default="global-min")
    seg.add_argument("--seed", type=int, default=None, help="defaults to $DRM_SEED, else 0")
    seg.add_argument("--jobs", type=int, default=1)
    seg.add_argument("--no-figures", action="store_true")
    seg.add_argument("--verbose", action="store_true")

    ev = sub.add_parser("eval", help="boundary precision/recall/F against ground truth")
    ev.add_argument("--labels", required=True, help="detected 16-bit PGM label map")
    ev.add_argument("--truth", action="append", required=True, help="PGM boundary map, nonzero = boundary")
    ev.add_argument("--tolerance", type=float, default=2.0)
    ev.add_argument("--alpha-f", type=float, default=0.5)

    fx = sub.add_parser("fixture", help="write the synthetic four-quadrant image and its truth")
    fx.add_argument("--size", type=int, default=128)
    fx.add_argument("--sigma", type=float, default=8.0)
    fx.add_argument("--seed", type=int, default=0)
    fx.add_argument("--out", required=True, help="output path prefix")
    return parser


def _config_echo(args, path: str, seed: int) -> dict:
    return {
        "in": path,
        "out": args.out,
        "init": args.init,
        "labels": args.labels,
        "grid_block": args.grid_block,
        "median_radius": args.median_radius,
        "quant_levels": args.quant_levels,
        "lambda1": args.lambda1,
        "lambda2": args.lambda2,
        "alpha": args.alpha,
        "beta": args.beta,
        "n0": args.n0,
        "prob_floor": args.prob_floor,
        "covar_reg": args.covar_reg,
        "max_samples": args.max_samples,
        "deterministic": args.deterministic,
        "engine": args.engine,
        "policy": args.policy,
        "seed": seed,
    }


def segment_one(args, path: str, out: str, seed: int) -> dict:
    timings = {}
    t = time.perf_counter()
    img = decode_ppm(Path(path).read_bytes())
    external = None
    if args.init == "external":
        if not args.labels:
            raise ValueError("--init external requires --labels")
        external = decode_label_map(Path(args.labels).read_bytes())
    timings["decode"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    init_cfg = InitSegConfig(args.init, args.median_radius, args.grid_block, args.quant_levels)
    init_lm = initial_segmentation(img, init_cfg, external)
    timings["init"] = (time.perf_counter() - t) * 1e3

    sprt_cfg = SprtConfig(
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        alpha=args.alpha,
        beta=args.beta,
        n0=args.n0,
        prob_floor=args.prob_floor,
        covar_regularizer=args.covar_reg,
        max_samples=args.max_samples,
        deterministic=args.deterministic,
    )
    cfg = DrmConfig(sprt_cfg, policy=_POLICIES[args.policy], engine=_ENGINES[args.engine], seed=seed)
    labels, trace = run(img, init_lm, cfg)
    timings.update(trace.timings_ms)

    t = time.perf_counter()
    report = build_report(_config_echo(args, path, seed), seed, trace, init_lm.num_regions,
                          labels.num_regions, timings, verbose=args.verbose)
    timings["audit"] = (time.perf_counter() - t) * 1e3

    write_outputs(out, img, labels, report, trace, figures=not args.no_figures)
    return report


def mean_color_image(img: RgbImage, lm: LabelMap) -> RgbImage:
    flat = lm.labels.ravel()
    px = img.data.reshape(-1, 3).astype(np.float64)
    counts = np.bincount(flat, minlength=lm.num_regions)
    means = np.stack([np.bincount(flat, weights=px[:, c], minlength=lm.num_regions) for c in range(3)], axis=1)
    means = np.rint(means / counts[:, None]).astype(np.uint8)
    return RgbImage(means[lm.labels])


def boundary_overlay(img: RgbImage, lm: LabelMap) -> RgbImage:
    out = img.data.copy()
    out[boundary_of(lm).mask] = (255, 0, 0)
    return RgbImage(out)


def write_outputs(out: str, img: RgbImage, labels: LabelMap, report: dict, trace, figures: bool = True) -> None:
    Path(f"{out}.labels.pgm").write_bytes(encode_pgm16(labels))
    Path(f"{out}.seg.ppm").write_bytes(encode_ppm(mean_color_image(img, labels)))
    Path(f"{out}.edges.ppm").write_bytes(encode_ppm(boundary_overlay(img, labels)))
    Path(f"{out}.counters.csv").write_text(counters_csv(trace.counters))
    if figures:
        plot_counters(trace.counters, f"{out}.counters.png")
        plot_degree_histogram(trace.initial_rag.degree_histogram(), f"{out}.degrees.png")
    Path(f"{out}.report.json").write_text(dumps_report(report))


def _segment_job(args, path, out, seed):
    segment_one(args, path, out, seed)
    return out


def cmd_segment(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.jobs < 1:
        raise ValueError("--jobs must be >= 1")
    jobs = []
    for i, path in enumerate(args.inputs):
        out = args.out if len(args.inputs) == 1 else f"{args.out}.{i}"
        jobs.append((path, out, seed + i))
    if args.jobs == 1 or len(jobs) == 1:
        for path, out, job_seed in jobs:
            segment_one(args, path, out, job_seed)
            log.info("wrote %s.*", out)
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_segment_job, args, *job) for job in jobs]
            for fut in futures:
                log.info("wrote %s.*", fut.result())
    return 0


def _read_boundary(path: str) -> BoundaryMap:
    return BoundaryMap(decode_pgm(Path(path).read_bytes()) > 0)


def cmd_eval(args) -> int:
    detected = boundary_of(decode_label_map(Path(args.labels).read_bytes()))
    truths = [_read_boundary(p) for p in args.truth]
    result = match_prf(detected, truths, args.tolerance, args.alpha_f)
    print(json.dumps(result.as_dict()))
    return 0


def cmd_fixture(args) -> int:
    img, truth = gen_quadrants(args.size, noise_sigma=args.sigma, seed=args.seed)
    Path(f"{args.out}.ppm").write_bytes(encode_ppm(img))
    Path(f"{args.out}.truth.pgm").write_bytes(encode_pgm16(truth))
    Path(f"{args.out}.boundary.pgm").write_bytes(encode_pgm8(boundary_of(truth).mask))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"segment": cmd_segment, "eval": cmd_eval, "fixture": cmd_fixture}
    try:
        return handlers[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"drmseg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
