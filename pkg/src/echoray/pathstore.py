"""Energy-based path filtering and columnar (Parquet) persistence."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

from .tracer import PathSet

FORMAT_VERSION = "1"

_SCALAR_COLUMNS = (
    ("source_index", pa.int32()),
    ("path_type", pa.int8()),
    ("distance_m", pa.float32()),
    ("listener_dir_x", pa.float32()),
    ("listener_dir_y", pa.float32()),
    ("listener_dir_z", pa.float32()),
    ("source_dir_x", pa.float32()),
    ("source_dir_y", pa.float32()),
    ("source_dir_z", pa.float32()),
    ("relative_speed_mps", pa.float32()),
    ("speed_of_sound_mps", pa.float32()),
)


class StoreError(ValueError):
    """Raised on schema or value problems during path I/O."""


@dataclass(frozen=True)
class TopCount:
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("TopCount n must be >= 0")

    def __str__(self):
        return f"top_count:{self.n}"


@dataclass(frozen=True)
class TopFraction:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError("TopFraction p must be in (0, 1]")

    def __str__(self):
        return f"top_fraction:{self.p:g}"


@dataclass(frozen=True)
class EnergyCoverage:
    q: float

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError("EnergyCoverage q must be in (0, 1]")

    def __str__(self):
        return f"energy_coverage:{self.q:g}"


FilterPolicy = TopCount | TopFraction | EnergyCoverage


@dataclass(frozen=True)
class WriteStats:
    bytes_written: int
    wall_time_s: float
    num_paths: int


def _energy_order(paths: PathSet) -> np.ndarray:
    """Indices sorting paths by descending total energy, original index
    ascending on ties."""
    total = paths.total_energy()
    # lexsort's last key is primary; negate for descending energy, and the
    # stable index key resolves ties in original order
    return np.lexsort((np.arange(paths.num_paths), -total))


def filter_paths(paths: PathSet, policy: FilterPolicy) -> PathSet:
    """Sort by descending total energy and keep the prefix chosen by `policy`."""
    order = _energy_order(paths)
    n = paths.num_paths
    if isinstance(policy, TopCount):
        keep = min(policy.n, n)
    elif isinstance(policy, TopFraction):
        keep = int(np.ceil(policy.p * n))
    elif isinstance(policy, EnergyCoverage):
        total = paths.total_energy()[order]
        grand = total.sum()
        if grand <= 0.0:
            keep = n
        else:
            cum = np.cumsum(total)
            keep = int(np.searchsorted(cum, policy.q * grand - 1e-15)) + 1
            keep = min(keep, n)
    else:
        raise TypeError(f"unknown filter policy {policy!r}")
    return paths.take(order[:keep], metadata={"filter_policy": str(policy)})


def cumulative_energy_curve(paths: PathSet) -> np.ndarray:
    """Cumulative energy fraction at each rank, paths sorted by descending
    total energy. Raises on an all-zero PathSet."""
    total = paths.total_energy()
    grand = total.sum()
    if paths.num_paths == 0 or grand <= 0.0:
        raise StoreError("no energy to rank")
    ranked = total[_energy_order(paths)]
    return np.cumsum(ranked) / grand


def _metadata_kv(paths: PathSet) -> dict[bytes, bytes]:
    md = paths.metadata
    kv = {
        b"format_version": FORMAT_VERSION.encode(),
        b"num_bands": str(paths.num_bands).encode(),
        b"band_centers_hz": json.dumps(paths.band_centers_hz.tolist()).encode(),
        b"scene_hash": str(md.get("scene_hash", "")).encode(),
        b"seed": str(md.get("seed", "")).encode(),
        b"filter_policy": str(md.get("filter_policy", "none")).encode(),
        b"source_position": json.dumps(md.get("source_position", [])).encode(),
        b"listener_position": json.dumps(md.get("listener_position", [])).encode(),
    }
    return kv


def to_table(paths: PathSet) -> pa.Table:
    """Arrow table in the on-disk schema (float32 numeric columns)."""
    values = {
        "source_index": paths.source_index.astype(np.int32),
        "path_type": paths.path_type.astype(np.int8),
        "distance_m": paths.distance.astype(np.float32),
        "listener_dir_x": paths.listener_direction[:, 0].astype(np.float32),
        "listener_dir_y": paths.listener_direction[:, 1].astype(np.float32),
        "listener_dir_z": paths.listener_direction[:, 2].astype(np.float32),
        "source_dir_x": paths.source_direction[:, 0].astype(np.float32),
        "source_dir_y": paths.source_direction[:, 1].astype(np.float32),
        "source_dir_z": paths.source_direction[:, 2].astype(np.float32),
        "relative_speed_mps": paths.relative_speed.astype(np.float32),
        "speed_of_sound_mps": paths.speed_of_sound.astype(np.float32),
    }
    for b in range(paths.num_bands):
        values[f"band_{b}"] = paths.intensities[:, b].astype(np.float32)

    for name, arr in values.items():
        if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
            raise StoreError(f"non-finite values in column {name}")

    fields = list(_SCALAR_COLUMNS) + [(f"band_{b}", pa.float32())
                                      for b in range(paths.num_bands)]
    schema = pa.schema([pa.field(n, t) for n, t in fields],
                       metadata=_metadata_kv(paths))
    return pa.Table.from_arrays([pa.array(values[n]) for n, _ in fields],
                                schema=schema)


def write_paths(paths: PathSet, path) -> WriteStats:
    """Write a PathSet to a Parquet file; returns size/time stats."""
    table = to_table(paths)
    path = Path(path)
    t0 = time.perf_counter()
    pq.write_table(table, path)
    elapsed = time.perf_counter() - t0
    return WriteStats(bytes_written=path.stat().st_size,
                      wall_time_s=elapsed,
                      num_paths=paths.num_paths)


def read_paths(path) -> PathSet:
    """Read a Parquet path file back into a PathSet.

    Columns keep their on-disk (float32) precision so that a write/read
    cycle is bit-exact.
    """
    table = pq.read_table(path)
    meta = table.schema.metadata or {}
    version = meta.get(b"format_version")
    if version is None:
        raise StoreError(f"{path}: not a path file (missing format_version)")
    if version.decode() != FORMAT_VERSION:
        raise StoreError(
            f"{path}: unsupported format version {version.decode()!r}")

    names = set(table.column_names)
    required = [n for n, _ in _SCALAR_COLUMNS]
    missing = [n for n in required if n not in names]
    num_bands = int(meta[b"num_bands"].decode())
    band_cols = [f"band_{b}" for b in range(num_bands)]
    missing += [n for n in band_cols if n not in names]
    if missing:
        raise StoreError(f"{path}: schema mismatch, missing columns {missing}")

    col = {n: table.column(n).to_numpy() for n in required + band_cols}
    n = table.num_rows
    metadata = {
        "scene_hash": meta.get(b"scene_hash", b"").decode(),
        "seed": meta.get(b"seed", b"").decode(),
        "filter_policy": meta.get(b"filter_policy", b"none").decode(),
        "source_position": json.loads(meta.get(b"source_position", b"[]")),
        "listener_position": json.loads(meta.get(b"listener_position", b"[]")),
    }
    return PathSet(
        source_index=col["source_index"],
        path_type=col["path_type"],
        distance=col["distance_m"],
        listener_direction=np.stack(
            [col["listener_dir_x"], col["listener_dir_y"], col["listener_dir_z"]],
            axis=1) if n else np.zeros((0, 3), dtype=np.float32),
        source_direction=np.stack(
            [col["source_dir_x"], col["source_dir_y"], col["source_dir_z"]],
            axis=1) if n else np.zeros((0, 3), dtype=np.float32),
        relative_speed=col["relative_speed_mps"],
        speed_of_sound=col["speed_of_sound_mps"],
        intensities=np.stack([col[b] for b in band_cols], axis=1)
        if n else np.zeros((0, num_bands), dtype=np.float32),
        band_centers_hz=np.asarray(json.loads(meta[b"band_centers_hz"].decode())),
        metadata=metadata,
    )
