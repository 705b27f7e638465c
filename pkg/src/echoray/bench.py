"""Benchmark harness: parameter sweeps with repetitions, CSV reports."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Scene, scene_from_dict
from .pathstore import TopFraction, filter_paths, write_paths, cumulative_energy_curve
from .tracer import SimConfig, trace

DEFAULT_REPETITIONS = 3

EXPERIMENTS = ("room-size", "ray-count", "energy", "storage")

# the reference shoebox used throughout the sweeps
REFERENCE_SCENE = {
    "shoebox": {"lx": 10.0, "ly": 4.0, "lz": 4.0},
    "materials": {"uniform": {"absorption": [0.3], "scattering": 0.1}},
    "source": {"position": [5.0, 3.0, 0.5], "radius": 0.25},
    "listener": {"position": [1.0, 1.0, 0.5]},
}


@dataclass
class BenchReport:
    experiment: str
    fieldnames: list[str]
    rows: list[dict] = field(default_factory=list)
    repetitions: int = DEFAULT_REPETITIONS

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.fieldnames)
            writer.writeheader()
            writer.writerows(self.rows)

    @staticmethod
    def read_csv(path) -> list[dict]:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))


def _timed_trace(scene: Scene, config: SimConfig, workers: int):
    t0 = time.perf_counter()
    paths = trace(scene, config, workers=workers)
    return time.perf_counter() - t0, paths


def _stats(values):
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


def bench_room_size(repetitions: int = DEFAULT_REPETITIONS, seed: int = 0,
                    workers: int = 1, scales=None) -> BenchReport:
    """Scale the reference room 0.1x..10x at fixed ray budget."""
    if scales is None:
        scales = np.round(np.arange(0.1, 10.0 + 1e-9, 0.1), 10)
    config = SimConfig(n_diffuse=20_000, n_specular=2_000, rng_seed=seed)
    report = BenchReport(
        "room-size",
        ["experiment", "scale", "time_mean_s", "time_sd_s",
         "paths_mean", "paths_sd", "repetitions"],
        repetitions=repetitions)
    for scale in scales:
        scene = scene_from_dict(REFERENCE_SCENE, {"scale": float(scale)})
        times, counts = [], []
        for _ in range(repetitions):
            dt, paths = _timed_trace(scene, config, workers)
            times.append(dt)
            counts.append(paths.num_paths)
        tm, ts = _stats(times)
        pm, psd = _stats(counts)
        report.rows.append({
            "experiment": "room-size", "scale": float(scale),
            "time_mean_s": tm, "time_sd_s": ts,
            "paths_mean": pm, "paths_sd": psd,
            "repetitions": repetitions})
    return report


def bench_ray_count(repetitions: int = DEFAULT_REPETITIONS, seed: int = 0,
                    workers: int = 1, steps: int = 30,
                    ratios=(0.1, 0.2, 0.3)) -> BenchReport:
    """Sweep diffuse 5k..80k at several specular-to-diffuse ratios.

    Repetitions are scheduled as full passes over the sweep rather than
    back-to-back per configuration, so slow system phases spread across
    all ray counts instead of biasing a few; time_min_s is the
    least-disturbed estimate per configuration.
    """
    diffuse_counts = np.linspace(5_000, 80_000, steps).round().astype(int)
    scene = scene_from_dict(REFERENCE_SCENE)
    report = BenchReport(
        "ray-count",
        ["experiment", "n_diffuse", "n_specular", "specular_ratio",
         "total_rays", "time_mean_s", "time_sd_s", "time_min_s",
         "paths_mean", "paths_sd", "repetitions"],
        repetitions=repetitions)
    grid = [(ratio, int(nd), int(round(ratio * nd)))
            for ratio in ratios for nd in diffuse_counts]
    times = {key: [] for key in grid}
    counts = {key: [] for key in grid}
    _timed_trace(scene, SimConfig(n_diffuse=5_000, n_specular=500,
                                  rng_seed=seed), workers)  # warm-up
    for _ in range(repetitions):
        for key in grid:
            ratio, nd, ns = key
            config = SimConfig(n_diffuse=nd, n_specular=ns, rng_seed=seed)
            dt, paths = _timed_trace(scene, config, workers)
            times[key].append(dt)
            counts[key].append(paths.num_paths)
    for key in grid:
        ratio, nd, ns = key
        tm, ts = _stats(times[key])
        pm, psd = _stats(counts[key])
        report.rows.append({
            "experiment": "ray-count", "n_diffuse": nd,
            "n_specular": ns, "specular_ratio": ratio,
            "total_rays": nd + ns,
            "time_mean_s": tm, "time_sd_s": ts,
            "time_min_s": min(times[key]),
            "paths_mean": pm, "paths_sd": psd,
            "repetitions": repetitions})
    return report


def bench_energy(seed: int = 0, workers: int = 1, max_points: int = 2_000
                 ) -> BenchReport:
    """Cumulative-energy curve of a large run (80k diffuse, 24k specular)."""
    scene = scene_from_dict(REFERENCE_SCENE)
    config = SimConfig(n_diffuse=80_000, n_specular=24_000, rng_seed=seed)
    paths = trace(scene, config, workers=workers)
    curve = cumulative_energy_curve(paths)
    n = curve.size
    idx = np.unique(np.linspace(0, n - 1, min(max_points, n)).round().astype(int))
    report = BenchReport(
        "energy",
        ["experiment", "rank", "fraction_of_paths", "cumulative_energy_fraction",
         "num_paths"],
        repetitions=1)
    for i in idx:
        report.rows.append({
            "experiment": "energy", "rank": int(i + 1),
            "fraction_of_paths": (i + 1) / n,
            "cumulative_energy_fraction": float(curve[i]),
            "num_paths": n})
    return report


def bench_storage(tmp_dir, repetitions: int = DEFAULT_REPETITIONS, seed: int = 0,
                  workers: int = 1,
                  fractions=(0.01, 0.02, 0.05, 0.10, 0.25, 0.50, 1.00)
                  ) -> BenchReport:
    """Write-time and file-size sweep over stored path fractions."""
    scene = scene_from_dict(REFERENCE_SCENE)
    config = SimConfig(n_diffuse=80_000, n_specular=24_000, rng_seed=seed)
    paths = trace(scene, config, workers=workers)
    tmp_dir = Path(tmp_dir)
    report = BenchReport(
        "storage",
        ["experiment", "fraction", "rows", "bytes_mean", "bytes_sd",
         "time_mean_s", "time_sd_s", "repetitions"],
        repetitions=repetitions)
    for frac in fractions:
        subset = filter_paths(paths, TopFraction(frac))
        out = tmp_dir / f"storage_{int(round(frac * 100))}.parquet"
        sizes, times = [], []
        for _ in range(repetitions):
            stats = write_paths(subset, out)
            sizes.append(stats.bytes_written)
            times.append(stats.wall_time_s)
        bm, bsd = _stats(sizes)
        tm, tsd = _stats(times)
        report.rows.append({
            "experiment": "storage", "fraction": frac,
            "rows": subset.num_paths,
            "bytes_mean": bm, "bytes_sd": bsd,
            "time_mean_s": tm, "time_sd_s": tsd,
            "repetitions": repetitions})
    return report


def run_experiment(name: str, output_csv, tmp_dir=None, repetitions=DEFAULT_REPETITIONS,
                   seed: int = 0, workers: int = 1) -> BenchReport:
    if name == "room-size":
        report = bench_room_size(repetitions, seed, workers)
    elif name == "ray-count":
        report = bench_ray_count(repetitions, seed, workers)
    elif name == "energy":
        report = bench_energy(seed, workers)
    elif name == "storage":
        if tmp_dir is None:
            tmp_dir = Path(output_csv).parent
        report = bench_storage(tmp_dir, repetitions, seed, workers)
    else:
        raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    report.write_csv(output_csv)
    return report


def linear_fit_r2(x, y) -> float:
    """R^2 of an ordinary least-squares line fit."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot
