"""Command-line driver: ``threshseg segment|phantom|sweep|bench``.

Exit codes: 0 converged/ok, 2 stopped at max-iter, 64 bad flags,
70 energy-decay violation, 74 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import gc
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, image_io, plotting
from .field import Grid, ImageField
from .oracle import PHANTOM_KINDS, make_phantom, misclassification_rate
from .solver import (INIT_STRATEGIES, DecayViolation, SolverConfig, fidelity, initialize,
                     phase_stats, solve, step)
from .spectral import ConvolutionPlan

EXIT_OK = 0
EXIT_MAX_ITER = 2
EXIT_USAGE = 64
EXIT_SOFTWARE = 70
EXIT_IO = 74

ENERGY_HEADER = ["k", "fidelity", "perimeter", "total", "e_k", "wall_ms"]
SUMMARY_HEADER = ["lambda", "dt", "iterations", "converged", "final_energy",
                  "perimeter", "misclassification"]
BENCH_HEADER = ["size", "pixels", "reps", "mean_ms", "min_ms"]

log = logging.getLogger("threshseg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text}")
    return v


def _float_list(conv):
    def parse(text):
        return [conv(t) for t in text.split(",") if t.strip()]
    return parse


def _flatten(values):
    return [v for group in values for v in group]


def _add_solver_flags(p, sweep=False):
    if sweep:
        p.add_argument("--dt", type=_float_list(_positive_float), nargs="+", default=None,
                       help="diffusion time(s); space or comma separated")
        p.add_argument("--lambda", dest="lam", type=_float_list(_nonneg_float), nargs="+",
                       default=None, help="perimeter weight(s)")
    else:
        p.add_argument("--dt", type=_positive_float, default=0.01)
        p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=0.003)
    p.add_argument("--phases", type=int, default=2)
    p.add_argument("--tau", type=_nonneg_float, default=0.0)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--init", choices=INIT_STRATEGIES, default="circles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--assert-decay", choices=("on", "off"), default="on")
    p.add_argument("--truth", help="ground-truth label map for misclassification scoring")


def build_parser():
    parser = _Parser(prog="threshseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("segment", help="segment one image")
    p.add_argument("--input")
    p.add_argument("--manifest", help="manifest.json of an earlier run; its input and "
                   "settings become the defaults")
    p.add_argument("--output-dir", default="out")
    _add_solver_flags(p)

    p = sub.add_parser("phantom", help="write a synthetic image and its truth map")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="four-quadrant")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--sigma", type=_nonneg_float, default=0.2)
    p.add_argument("--speckle", type=_nonneg_float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default="phantom")

    p = sub.add_parser("sweep", help="run segment over a grid of lambda/dt values")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", default="sweep")
    _add_solver_flags(p, sweep=True)

    p = sub.add_parser("bench", help="time warm iterations on phantoms of several sizes")
    p.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--phases", type=int, default=4)
    p.add_argument("--dt", type=_positive_float, default=0.01)
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=0.003)
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="four-quadrant")
    p.add_argument("--sigma", type=_nonneg_float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default="bench")
    return parser


def _config(args, dt=None, lam=None) -> SolverConfig:
    try:
        return SolverConfig(n=args.phases, dt=args.dt if dt is None else dt,
                            lam=args.lam if lam is None else lam, tau=args.tau,
                            max_iter=args.max_iter, init=args.init, seed=args.seed,
                            assert_decay=args.assert_decay == "on")
    except ValueError as exc:
        raise UsageError(str(exc))


def _fmt(x) -> str:
    return repr(float(x))


def write_energy_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENERGY_HEADER)
        for r in reports:
            w.writerow([r.k, _fmt(r.energy.fidelity_total), _fmt(r.energy.perimeter_total),
                        _fmt(r.energy.total), _fmt(r.e_k), f"{r.wall_time * 1e3:.3f}"])


def _load_input(path):
    raw = image_io.load_image(path)
    return raw, ImageField.from_array(image_io.normalize(raw))


def _load_truth(path, shape):
    if path is None:
        return None
    truth = image_io.read_label_map(path)
    if truth.shape != shape:
        raise UsageError(f"truth map {truth.shape} does not match image {shape}")
    return truth


def run_segment(raw, f, config, outdir, truth=None, input_path=None):
    """Solve and write every segment output into ``outdir``; returns (result, manifest)."""
    outdir = image_io.ensure_dir(outdir)
    t0 = time.perf_counter()
    init = initialize(f.grid, config, f)
    result = solve(f, config, init=init)
    elapsed = time.perf_counter() - t0
    labels = result.final.labels
    n = config.n

    emitted = []

    def out(name):
        emitted.append(name)
        return outdir / name

    image_io.write_label_map(labels, out("labels.png"), n=n)
    for p in image_io.write_phase_masks(labels, n, outdir):
        emitted.append(p.name)
    image_io.write_contour_overlay(raw, labels, out("overlay.png"))
    write_energy_csv(result.reports, out("energy.csv"))
    plotting.plot_energy_curve(result.reports, f.grid.area, out("energy.png"),
                               title=f"δt={config.dt:g}, λ={config.lam:g}")
    plotting.plot_segmentation(image_io.normalize(raw), init.labels, labels,
                               out("segmentation.png"))
    last = result.reports[-1]
    manifest = {
        "input": str(input_path) if input_path else None,
        "output_dir": str(outdir),
        "config": {"phases": n, "dt": config.dt, "lambda": config.lam, "tau": config.tau,
                   "max_iter": config.max_iter, "init": config.init, "seed": config.seed,
                   "assert_decay": config.assert_decay},
        "iterations": result.iterations,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "final_energy": last.energy.total,
        "final_fidelity": last.energy.fidelity_total,
        "final_perimeter": last.energy.perimeter_total,
        "phase_means": [[None if np.isnan(c) else float(c) for c in row] for row in last.means],
        "wall_time_s": elapsed,
        "emitted": emitted + ["manifest.json"],
    }
    if truth is not None:
        manifest["misclassification"] = misclassification_rate(labels, truth)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return result, manifest


# manifest config key -> (flag, argparse dest)
MANIFEST_FLAGS = {"phases": ("--phases", "phases"), "dt": ("--dt", "dt"),
                  "lambda": ("--lambda", "lam"), "tau": ("--tau", "tau"),
                  "max_iter": ("--max-iter", "max_iter"), "init": ("--init", "init"),
                  "seed": ("--seed", "seed")}


def _apply_manifest(args, argv):
    """Fill segment arguments not given on the command line from a manifest."""
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        cfg = manifest["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot use manifest {args.manifest}: {exc}")
    given = {a.split("=")[0] for a in argv if a.startswith("--")}
    for key, (flag, dest) in MANIFEST_FLAGS.items():
        if flag not in given:
            setattr(args, dest, cfg[key])
    if "--assert-decay" not in given:
        args.assert_decay = "on" if cfg["assert_decay"] else "off"
    if args.input is None:
        args.input = manifest.get("input")


def cmd_segment(args):
    if args.input is None:
        raise UsageError("segment needs --input or --manifest")
    config = _config(args)
    raw, f = _load_input(args.input)
    truth = _load_truth(args.truth, f.grid.shape)
    result, manifest = run_segment(raw, f, config, args.output_dir, truth, args.input)
    print(f"{result.stop_reason} after {result.iterations} iterations, "
          f"energy {manifest['final_energy']:.6g}, wrote {args.output_dir}")
    return EXIT_OK if result.converged else EXIT_MAX_ITER


def cmd_phantom(args):
    try:
        ph = make_phantom(args.kind, args.size, args.sigma, args.seed, args.speckle)
    except ValueError as exc:
        raise UsageError(str(exc))
    outdir = image_io.ensure_dir(args.output_dir)
    image_io.write_png(image_io.to_raw(ph.image.values), outdir / "phantom.png")
    image_io.write_label_map(ph.truth, outdir / "truth.png", n=ph.n)
    print(f"{ph.description}: wrote {outdir / 'phantom.png'} and {outdir / 'truth.png'}")
    return EXIT_OK


def cmd_sweep(args):
    lams = _flatten(args.lam) if args.lam is not None else [0.003]
    dts = _flatten(args.dt) if args.dt is not None else [0.01]
    if not lams or not dts:
        raise UsageError("sweep needs at least one lambda and one dt value")
    configs = [(lam, dt, _config(args, dt=dt, lam=lam)) for dt in dts for lam in lams]
    raw, f = _load_input(args.input)
    truth = _load_truth(args.truth, f.grid.shape)
    outdir = image_io.ensure_dir(args.output_dir)
    rows, curves = [], []
    all_converged = True
    for lam, dt, config in configs:
        sub = outdir / f"lambda_{lam:g}_dt_{dt:g}"
        result, manifest = run_segment(raw, f, config, sub, truth, args.input)
        all_converged &= result.converged
        rows.append({"lambda": lam, "dt": dt, "iterations": result.iterations,
                     "converged": result.converged, "final_energy": manifest["final_energy"],
                     "perimeter": manifest["final_perimeter"],
                     "misclassification": manifest.get("misclassification")})
        curves.append(result.energies)
        print(f"lambda={lam:g} dt={dt:g}: {result.stop_reason} after {result.iterations} "
              f"iterations, perimeter {manifest['final_perimeter']:.6g}")
    with open(outdir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([_fmt(r["lambda"]), _fmt(r["dt"]), r["iterations"], int(r["converged"]),
                        _fmt(r["final_energy"]), _fmt(r["perimeter"]),
                        "" if r["misclassification"] is None else _fmt(r["misclassification"])])
    plotting.plot_sweep(rows, curves, f.grid.area, outdir / "sweep.png")
    return EXIT_OK if all_converged else EXIT_MAX_ITER


class IterationTimer:
    """Warm solver iteration on a fixed state, timed repeatedly."""

    def __init__(self, f, config):
        self.f = f
        self.config = config
        self.plan = ConvolutionPlan.create(f.grid, config.dt)
        u = initialize(f.grid, config, f)
        self.g = fidelity(f, phase_stats(f, u))
        self.smoothed = self.plan.convolve(u.indicators)
        self.times = []
        self.run_once()  # warm-up, not recorded

    def run_once(self):
        return step(self.f, self.g, self.smoothed, self.plan, self.config)

    def sample(self):
        t0 = time.perf_counter()
        self.run_once()
        self.times.append(time.perf_counter() - t0)


def time_interleaved(timers, reps):
    """Sample every timer once per round so all sizes see the same machine load."""
    gc_was_enabled = gc.isenabled()
    gc.disable()  # as timeit does
    try:
        for _ in range(reps):
            for t in timers:
                t.sample()
    finally:
        if gc_was_enabled:
            gc.enable()
    return timers


def time_iterations(f, config, reps):
    """Mean and min wall time (s) of one warm solver iteration, over ``reps`` repeats."""
    (timer,) = time_interleaved([IterationTimer(f, config)], reps)
    return float(np.mean(timer.times)), float(np.min(timer.times))


def cmd_bench(args):
    if any(s < 16 for s in args.sizes):
        raise UsageError("bench sizes must be at least 16")
    if args.reps < 5:
        raise UsageError("bench needs at least 5 repetitions")
    config = _config(argparse.Namespace(phases=args.phases, dt=args.dt, lam=args.lam, tau=0.0,
                                        max_iter=1, init="circles", seed=args.seed,
                                        assert_decay="off"))
    outdir = image_io.ensure_dir(args.output_dir)
    timers = [IterationTimer(make_phantom(args.kind, size, args.sigma, args.seed).image, config)
              for size in args.sizes]
    time_interleaved(timers, args.reps)
    rows = []
    for size, timer in zip(args.sizes, timers):
        mean_ms, min_ms = np.mean(timer.times) * 1e3, np.min(timer.times) * 1e3
        rows.append((size, size * size, args.reps, mean_ms, min_ms))
        print(f"{size}x{size}: {mean_ms:.3f} ms/iteration (min {min_ms:.3f})")
    with open(outdir / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for size, pix, reps, mean_ms, min_ms in rows:
            w.writerow([size, pix, reps, f"{mean_ms:.4f}", f"{min_ms:.4f}"])
    if len(rows) > 1:
        plotting.plot_bench([r[0] for r in rows], [r[3] for r in rows], outdir / "bench.png")
    return EXIT_OK


COMMANDS = {"segment": cmd_segment, "phantom": cmd_phantom, "sweep": cmd_sweep,
            "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "manifest", None):
            _apply_manifest(args, sys.argv[1:] if argv is None else argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"threshseg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except image_io.ImageReadError as exc:
        print(f"threshseg: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"threshseg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DecayViolation as exc:
        print(f"threshseg: internal error: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
