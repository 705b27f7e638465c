"""Command-line pipeline: trace -> filter -> auralize, plus benchmarks."""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import bench as bench_mod
from .auralize import BandConfig, synthesize_ir, write_wav
from .geometry import SceneError, load_scene
from .pathstore import (
    EnergyCoverage,
    StoreError,
    TopCount,
    TopFraction,
    filter_paths,
    read_paths,
    write_paths,
)
from .tracer import SimConfig, trace

WORKERS_ENV = "ECHORAY_WORKERS"


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _parse_bands(spec: str | None):
    if spec is None:
        return None
    try:
        bands = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise click.UsageError(f"invalid --bands value {spec!r}")
    if not bands:
        raise click.UsageError("--bands must list at least one center frequency")
    return bands


@click.group()
def main():
    """Acoustic path tracing, filtering, storage, and HOA auralization."""


@main.command("trace")
@click.argument("scene_file", type=click.Path(path_type=Path))
@click.argument("output", type=click.Path(path_type=Path))
@click.option("--config", "config_file", type=click.Path(path_type=Path),
              help="SimConfig JSON file.")
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@click.option("--workers", type=int, default=None,
              help=f"Tracing worker count (default ${WORKERS_ENV} or 1).")
@click.option("--bands", type=str, default=None,
              help="Comma-separated band centers (Hz), overrides the scene.")
@click.option("--scale", type=float, default=None,
              help="Uniform geometry scale factor.")
def cmd_trace(scene_file, output, config_file, seed, workers, bands, scale):
    """Trace SCENE_FILE and write the path set to OUTPUT (Parquet)."""
    if not scene_file.exists():
        raise click.UsageError(f"scene not found: {scene_file}")
    overrides = {}
    band_list = _parse_bands(bands)
    if band_list is not None:
        overrides["bands"] = band_list
    if scale is not None:
        overrides["scale"] = scale
    try:
        scene = load_scene(scene_file, overrides or None)
        cfg = {}
        if config_file is not None:
            if not config_file.exists():
                raise click.UsageError(f"config not found: {config_file}")
            cfg = json.loads(config_file.read_text())
        if seed is not None:
            cfg["rng_seed"] = seed
        config = SimConfig.from_dict(cfg)
        t0 = time.perf_counter()
        paths = trace(scene, config, workers=workers or _default_workers())
        elapsed = time.perf_counter() - t0
        stats = write_paths(paths, output)
    except (SceneError, StoreError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    counts = paths.counts_by_type()
    for name, count in counts.items():
        click.echo(f"{name}: {count}")
    click.echo(f"total: {paths.num_paths}")
    click.echo(f"elapsed: {elapsed:.3f} s")
    click.echo(f"wrote {stats.bytes_written} bytes to {output}")


@main.command("filter")
@click.argument("input_file", type=click.Path(path_type=Path))
@click.argument("output", type=click.Path(path_type=Path))
@click.option("--top-count", type=int, default=None,
              help="Keep the N highest-energy paths.")
@click.option("--top-fraction", type=float, default=None,
              help="Keep the top fraction (0, 1] of paths by energy rank.")
@click.option("--energy-coverage", type=float, default=None,
              help="Keep the shortest prefix covering this energy fraction.")
def cmd_filter(input_file, output, top_count, top_fraction, energy_coverage):
    """Filter a path file by energy; exactly one policy flag is required."""
    given = [v is not None for v in (top_count, top_fraction, energy_coverage)]
    if sum(given) != 1:
        raise click.UsageError(
            "exactly one of --top-count, --top-fraction, --energy-coverage "
            "must be given")
    try:
        if top_count is not None:
            policy = TopCount(top_count)
        elif top_fraction is not None:
            policy = TopFraction(top_fraction)
        else:
            policy = EnergyCoverage(energy_coverage)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    if not input_file.exists():
        raise click.UsageError(f"input not found: {input_file}")
    try:
        paths = read_paths(input_file)
        kept = filter_paths(paths, policy)
        write_paths(kept, output)
    except (StoreError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    total = float(paths.total_energy().sum())
    retained = float(kept.total_energy().sum())
    frac = retained / total if total > 0 else 0.0
    if kept.num_paths == 0:
        click.echo("warning: filter retained no paths", err=True)
    click.echo(f"retained {kept.num_paths} of {paths.num_paths} paths")
    click.echo(f"retained energy fraction: {frac:.6f}")


@main.command("auralize")
@click.argument("input_file", type=click.Path(path_type=Path))
@click.argument("output", type=click.Path(path_type=Path))
@click.option("--order", type=int, default=9, show_default=True,
              help="Ambisonic order (0-9).")
@click.option("--sample-rate", type=int, default=48_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Noise seed.")
@click.option("--tail", type=float, default=0.1, show_default=True,
              help="IR tail padding in seconds.")
def cmd_auralize(input_file, output, order, sample_rate, seed, tail):
    """Synthesize an Ambisonic IR WAV from a path file."""
    if not input_file.exists():
        raise click.UsageError(f"input not found: {input_file}")
    try:
        paths = read_paths(input_file)
        config = BandConfig(band_centers_hz=paths.band_centers_hz,
                            sample_rate=sample_rate, noise_seed=seed,
                            tail_padding_s=tail)
        ir = synthesize_ir(paths, order, config)
        write_wav(ir, output)
    except (StoreError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    energies = np.sum(ir.samples.astype(np.float64) ** 2, axis=1)
    click.echo(f"channels: {ir.num_channels}")
    click.echo(f"length: {ir.length} samples ({ir.length / ir.sample_rate:.3f} s)")
    click.echo("channel energies: "
               + " ".join(f"{e:.6e}" for e in energies))


@main.command("bench")
@click.argument("experiment", type=click.Choice(bench_mod.EXPERIMENTS))
@click.argument("output_csv", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=None,
              help="Worker count; benchmarks default to sequential runs.")
@click.option("--repetitions", type=int, default=bench_mod.DEFAULT_REPETITIONS,
              show_default=True)
def cmd_bench(experiment, output_csv, seed, workers, repetitions):
    """Run a benchmark sweep and write a CSV report."""
    try:
        report = bench_mod.run_experiment(
            experiment, output_csv, repetitions=repetitions, seed=seed,
            workers=workers or 1)
    except (SceneError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"{experiment}: {len(report.rows)} samples -> {output_csv}")


if __name__ == "__main__":
    main()
