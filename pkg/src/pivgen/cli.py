"""Command-line interface: generate, bench, ablate, score.

Exit codes: 0 success, 1 usage error, 2 config error, 3 I/O error,
4 generation error. Machine-readable output lines start with "METRIC" or
"ABLATE" and carry space-separated key=value records.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import export
from .config import (ConfigError, GeneratorConfig, OutputConfig, load_config,
                     render_config, with_updates)
from .flowfield import FlowFieldError, load_flo_file, write_flo_file
from .metrics import MetricError, epe, relative_discrepancy
from .pipeline import GenerationError, Sampler
from .raster import patch_side

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_GENERATION = 4

PARAMS_SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _image_writer(fmt: str):
    if fmt == "png16":
        return export.write_png16, "png"
    return export.write_raw_f32, "raw"


def _pair_paths(out_dir: str, ext: str, batch: int, pair: int) -> list[str]:
    stem = os.path.join(out_dir, f"pair_{batch:06d}_{pair:04d}")
    return [f"{stem}_a.{ext}", f"{stem}_b.{ext}", f"{stem}_flow.flo"]


def _sidecar(cfg: GeneratorConfig, batch) -> dict:
    pairs = []
    for i, p in enumerate(batch.params):
        active = p.diameters[:p.active_count]
        d_max = float(active.max()) if p.active_count else cfg.diameter_range[1]
        i0 = p.peak_intensities[:p.active_count]
        rho = p.rhos[:p.active_count]
        pairs.append({
            "pair_index": i,
            "seeding_density": p.seeding_density,
            "active_count": p.active_count,
            "allocated_count": int(p.diameters.shape[0]),
            "diameter_min": float(active.min()) if p.active_count else None,
            "diameter_max": float(active.max()) if p.active_count else None,
            "peak_intensity_min": float(i0.min()) if p.active_count else None,
            "peak_intensity_max": float(i0.max()) if p.active_count else None,
            "rho_min": float(rho.min()) if p.active_count else None,
            "rho_max": float(rho.max()) if p.active_count else None,
            "patch_side": patch_side(d_max, cfg.patch_multiplier),
        })
    return {
        "schema_version": PARAMS_SCHEMA_VERSION,
        "batch_index": batch.batch_index,
        "image_height": cfg.image_height,
        "image_width": cfg.image_width,
        "pairs": pairs,
    }


def cmd_generate(cfg: GeneratorConfig, batches: int, out_dir: str,
                 start_batch: int = 0) -> int:
    writer, ext = _image_writer(cfg.output.format)
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir!r} is not writable")

    total = 0
    started = time.perf_counter()
    with Sampler(cfg, start_batch=start_batch, max_batches=batches) as sampler:
        for batch in sampler:
            written: list[str] = []
            try:
                for i in range(cfg.batch_size):
                    path_a, path_b, path_flow = _pair_paths(
                        out_dir, ext, batch.batch_index, i)
                    writer(path_a, batch.images1[i])
                    written.append(path_a)
                    writer(path_b, batch.images2[i])
                    written.append(path_b)
                    write_flo_file(path_flow, batch.flow_fields[i])
                    written.append(path_flow)
                sidecar_path = os.path.join(
                    out_dir, f"params_{batch.batch_index:06d}.json")
                with open(sidecar_path, "w", encoding="utf-8") as fh:
                    json.dump(_sidecar(cfg, batch), fh, sort_keys=True, indent=1)
                    fh.write("\n")
                written.append(sidecar_path)
            except OSError:
                # Remove the partial batch so the output tree stays consistent.
                for path in written:
                    try:
                        os.remove(path)
                    except OSError:
                        pass
                raise
            total += cfg.batch_size
    elapsed = time.perf_counter() - started
    print(f"generated pairs={total} batches={batches} dir={out_dir} "
          f"seconds={elapsed:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

@dataclass
class BenchReport:
    pairs_generated: int
    wall_seconds: float
    throughput: float
    config_fingerprint: str
    batch_seconds: list[float]

    def batch_throughputs(self, batch_size: int) -> list[float]:
        return [batch_size / t for t in self.batch_seconds]


def config_fingerprint(cfg: GeneratorConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()[:16]


def run_bench(cfg: GeneratorConfig, pairs_target: int, warmup: int,
              sampler_kwargs: dict | None = None) -> BenchReport:
    """Time generation of at least ``pairs_target`` pairs, after ``warmup``
    untimed batches."""
    batches_needed = max(1, math.ceil(pairs_target / cfg.batch_size))
    timings: list[float] = []
    with Sampler(cfg, **(sampler_kwargs or {})) as sampler:
        for _ in range(warmup):
            sampler.next_batch()
        for _ in range(batches_needed):
            t0 = time.perf_counter()
            sampler.next_batch()
            timings.append(time.perf_counter() - t0)
    wall = sum(timings)
    pairs = batches_needed * cfg.batch_size
    return BenchReport(
        pairs_generated=pairs,
        wall_seconds=wall,
        throughput=pairs / wall if wall > 0 else float("inf"),
        config_fingerprint=config_fingerprint(cfg),
        batch_seconds=timings,
    )


def cmd_bench(cfg: GeneratorConfig, pairs_target: int, warmup: int) -> int:
    report = run_bench(cfg, pairs_target, warmup)
    print(f"pairs generated   {report.pairs_generated}")
    print(f"wall seconds      {report.wall_seconds:.3f}")
    print(f"pairs per second  {report.throughput:.2f}")
    print(f"config            {report.config_fingerprint}")
    print(f"METRIC pairs_generated={report.pairs_generated}")
    print(f"METRIC wall_seconds={report.wall_seconds:.6f}")
    print(f"METRIC throughput={report.throughput:.4f}")
    print(f"METRIC config_fingerprint={report.config_fingerprint}")
    for i, t in enumerate(report.batch_seconds):
        print(f"METRIC batch={i} seconds={t:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

ABLATION_AXES = ("image_size", "seeding_density", "diameter_max",
                 "batch_size", "flow_fields_per_batch", "reuse_count",
                 "threads")


def apply_axis(cfg: GeneratorConfig, axis: str, value: float) -> GeneratorConfig:
    if axis == "image_size":
        v = int(value)
        return with_updates(cfg, image_height=v, image_width=v)
    if axis == "seeding_density":
        return with_updates(cfg, seeding_density_range=(value, value))
    if axis == "diameter_max":
        lo = min(cfg.diameter_range[0], value)
        return with_updates(cfg, diameter_range=(lo, value))
    if axis == "batch_size":
        return with_updates(cfg, batch_size=int(value))
    if axis == "flow_fields_per_batch":
        return with_updates(cfg, flow_fields_per_batch=int(value))
    if axis == "reuse_count":
        return with_updates(cfg, batches_per_flow_field=int(value))
    if axis == "threads":
        return with_updates(cfg, threads=int(value))
    raise UsageError(f"unknown ablation axis {axis!r}; "
                     f"expected one of {ABLATION_AXES}")


def ablate(cfg: GeneratorConfig, axis: str, values: list[float],
           pairs_target: int, warmup: int) -> list[dict]:
    rows = []
    for value in values:
        variant = apply_axis(cfg, axis, value)
        report = run_bench(variant, pairs_target, warmup)
        rates = np.array(report.batch_throughputs(variant.batch_size))
        rows.append({
            "value": value,
            "mean": float(rates.mean()),
            "min": float(rates.min()),
            "max": float(rates.max()),
            "std": float(rates.std()),
            "q1": float(np.percentile(rates, 25)),
            "q3": float(np.percentile(rates, 75)),
        })
    return rows


def cmd_ablate(cfg: GeneratorConfig, axis: str, values: list[float],
               pairs_target: int, warmup: int) -> int:
    rows = ablate(cfg, axis, values, pairs_target, warmup)
    header = f"{'value':>12} {'mean':>10} {'min':>10} {'max':>10} " \
             f"{'std':>10} {'Q1':>10} {'Q3':>10}"
    print(f"axis: {axis} (throughput in pairs/second)")
    print(header)
    for row in rows:
        print(f"{row['value']:># 12g} {row['mean']:>10.2f} {row['min']:>10.2f} "
              f"{row['max']:>10.2f} {row['std']:>10.2f} {row['q1']:>10.2f} "
              f"{row['q3']:>10.2f}")
    for row in rows:
        print(f"ABLATE axis={axis} value={row['value']:g} "
              f"mean={row['mean']:.4f} min={row['min']:.4f} "
              f"max={row['max']:.4f} std={row['std']:.4f} "
              f"q1={row['q1']:.4f} q3={row['q3']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def _flo_dir(path: str) -> dict[str, str]:
    if not os.path.isdir(path):
        raise OSError(f"not a directory: {path}")
    return {name: os.path.join(path, name)
            for name in sorted(os.listdir(path)) if name.endswith(".flo")}


def _matched_fields(est_dir: str, ref_dir: str):
    est, ref = _flo_dir(est_dir), _flo_dir(ref_dir)
    if set(est) != set(ref):
        missing = sorted(set(ref) - set(est))
        extra = sorted(set(est) - set(ref))
        raise MetricError(f"file sets differ: missing={missing} extra={extra}")
    if not est:
        raise MetricError("no .flo files found")
    names = sorted(est)
    return ([load_flo_file(est[n]) for n in names],
            [load_flo_file(ref[n]) for n in names])


def cmd_score(est_dir: str, ref_dir: str, est2_dir: str | None) -> int:
    estimates, references = _matched_fields(est_dir, ref_dir)
    value = epe(estimates, references)
    print(f"images            {len(estimates)}")
    print(f"EPE               {value:.6g}")
    print(f"METRIC epe={value:.12g}")
    if est2_dir is not None:
        estimates2, _ = _matched_fields(est2_dir, ref_dir)
        value2 = epe(estimates2, references)
        disc = relative_discrepancy(estimates, estimates2, references)
        print(f"EPE (est2)        {value2:.6g}")
        print(f"relative disc.    {disc:.6g}")
        print(f"METRIC epe2={value2:.12g}")
        print(f"METRIC relative_discrepancy={disc:.12g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="pivgen",
                     description="Synthetic PIV image-pair generator")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="render image pairs to disk")
    gen.add_argument("--config", required=True)
    gen.add_argument("--batches", type=int, required=True)
    gen.add_argument("--out", default=None,
                     help="output directory (default: config output.directory)")
    gen.add_argument("--start-batch", type=int, default=0,
                     help="first batch index (stream is seekable by batch)")
    gen.add_argument("--format", choices=("png16", "raw_f32"), default=None,
                     help="override config output.format")

    bench = sub.add_parser("bench", help="measure generation throughput")
    bench.add_argument("--config", required=True)
    bench.add_argument("--pairs", type=int, default=256)
    bench.add_argument("--warmup", type=int, default=3)

    abl = sub.add_parser("ablate", help="throughput sweep over one axis")
    abl.add_argument("--config", required=True)
    abl.add_argument("--axis", required=True, choices=ABLATION_AXES)
    abl.add_argument("--values", required=True,
                     help="comma-separated axis values")
    abl.add_argument("--pairs", type=int, default=128)
    abl.add_argument("--warmup", type=int, default=1)

    score = sub.add_parser("score", help="EPE of estimate dirs vs reference")
    score.add_argument("--est", required=True)
    score.add_argument("--ref", required=True)
    score.add_argument("--est2", default=None)
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "score":
        return cmd_score(args.est, args.ref, args.est2)

    cfg = load_config(args.config)
    if args.command == "generate":
        if args.batches <= 0:
            raise UsageError("--batches must be positive")
        if args.start_batch < 0:
            raise UsageError("--start-batch must be non-negative")
        if args.format is not None:
            cfg = with_updates(cfg, output=OutputConfig(
                format=args.format, directory=cfg.output.directory))
        out_dir = args.out if args.out is not None else cfg.output.directory
        return cmd_generate(cfg, args.batches, out_dir, args.start_batch)
    if args.command == "bench":
        return cmd_bench(cfg, args.pairs, args.warmup)
    if args.command == "ablate":
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --values: {exc}") from exc
        if not values:
            raise UsageError("--values is empty")
        return cmd_ablate(cfg, args.axis, values, args.pairs, args.warmup)
    raise UsageError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FlowFieldError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GenerationError, MetricError) as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_GENERATION


if __name__ == "__main__":
    sys.exit(main())
