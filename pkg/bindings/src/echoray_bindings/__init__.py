"""Dict-of-arrays bindings around the echoray simulation core.

`trace` returns, per listener, a flat mapping from field name to a
contiguous NumPy array in the same dtypes as the on-disk Parquet schema
(int32/int8/float32 columns, float64 band centers), so array values are
bit-identical to what the CLI writes. The arrays can be sliced, masked,
or edited freely and then handed to `auralize` or `write_paths`; no
simulation logic lives in this layer.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from echoray import BandConfig, PathSet, SimConfig
from echoray import filter_paths as _core_filter
from echoray import load_scene as _core_load_scene
from echoray import read_paths as _core_read
from echoray import scene_from_dict as _core_scene_from_dict
from echoray import synthesize_ir as _core_synthesize
from echoray import trace as _core_trace
from echoray import write_paths as _core_write

__all__ = ["trace", "auralize", "read_paths", "write_paths",
           "py_trace", "py_auralize"]

__version__ = "0.1.0"

_ARRAY_FIELDS = ("source_indices", "path_types", "distances",
                 "listener_directions", "source_directions",
                 "relative_speeds", "speeds_of_sound", "intensities")


def _to_arrays(ps: PathSet) -> dict[str, np.ndarray]:
    """Snapshot a PathSet as name -> array, storage dtypes, single copy."""
    return {
        "source_indices": np.ascontiguousarray(ps.source_index, dtype=np.int32),
        "path_types": np.ascontiguousarray(ps.path_type, dtype=np.int8),
        "distances": np.ascontiguousarray(ps.distance, dtype=np.float32),
        "listener_directions": np.ascontiguousarray(
            ps.listener_direction, dtype=np.float32),
        "source_directions": np.ascontiguousarray(
            ps.source_direction, dtype=np.float32),
        "relative_speeds": np.ascontiguousarray(
            ps.relative_speed, dtype=np.float32),
        "speeds_of_sound": np.ascontiguousarray(
            ps.speed_of_sound, dtype=np.float32),
        "intensities": np.ascontiguousarray(ps.intensities, dtype=np.float32),
        "band_centers_hz": np.ascontiguousarray(
            ps.band_centers_hz, dtype=np.float64),
    }


def _check_arrays(arrays: dict) -> int:
    missing = [f for f in _ARRAY_FIELDS if f not in arrays]
    if missing:
        raise ValueError(f"path arrays missing fields {missing}")
    n = np.asarray(arrays["distances"]).shape[0]
    for f in _ARRAY_FIELDS:
        a = np.asarray(arrays[f])
        if a.shape[0] != n:
            raise ValueError(
                f"field {f!r} has leading dimension {a.shape[0]}, expected {n}")
    for f, ncol in (("listener_directions", 3), ("source_directions", 3)):
        a = np.asarray(arrays[f])
        if a.ndim != 2 or a.shape[1] != ncol:
            raise ValueError(f"field {f!r} must have shape (N, {ncol})")
    if np.asarray(arrays["intensities"]).ndim != 2:
        raise ValueError("field 'intensities' must have shape (N, B)")
    return n


def _to_pathset(arrays: dict, metadata: dict | None = None) -> PathSet:
    n = _check_arrays(arrays)
    intensities = np.atleast_2d(np.asarray(arrays["intensities"]))
    if n == 0:
        intensities = intensities.reshape(0, intensities.shape[-1])
    if "band_centers_hz" in arrays:
        centers = np.asarray(arrays["band_centers_hz"], dtype=np.float64)
    else:
        centers = np.zeros(intensities.shape[1])
    if centers.shape[0] != intensities.shape[1]:
        raise ValueError("band_centers_hz length does not match intensities")
    return PathSet(
        source_index=np.asarray(arrays["source_indices"]),
        path_type=np.asarray(arrays["path_types"]),
        distance=np.asarray(arrays["distances"]),
        listener_direction=np.asarray(arrays["listener_directions"]),
        source_direction=np.asarray(arrays["source_directions"]),
        relative_speed=np.asarray(arrays["relative_speeds"]),
        speed_of_sound=np.asarray(arrays["speeds_of_sound"]),
        intensities=intensities,
        band_centers_hz=centers,
        metadata=dict(metadata or {}),
    )


def _scene_documents(scene) -> list[dict]:
    """Expand a scene description into one single-listener document per
    listener; a plain scene yields one document."""
    if isinstance(scene, (str, Path)):
        doc = json.loads(Path(scene).read_text())
    elif isinstance(scene, dict):
        doc = json.loads(json.dumps(scene))
    else:
        raise TypeError("scene must be a file path or a scene dictionary")
    listeners = doc.pop("listeners", None)
    if listeners is None:
        return [doc]
    docs = []
    for listener in listeners:
        sub = json.loads(json.dumps(doc))
        sub["listener"] = (listener if isinstance(listener, dict)
                           else {"position": list(listener)})
        docs.append(sub)
    return docs


def trace(scene, config=None, filter_policy=None) -> dict:
    """Trace a scene and return {listener id: arrays} mappings.

    Parameters
    ----------
    scene : scene JSON path or scene dictionary; a "listeners" list entry
        expands into one independent trace per listener.
    config : SimConfig, config dictionary, or None for defaults.
    filter_policy : optional TopCount / TopFraction / EnergyCoverage,
        applied before conversion exactly as the CLI filter step.
    """
    if config is None:
        config = SimConfig()
    elif isinstance(config, dict):
        config = SimConfig.from_dict(config)
    out = {}
    for listener_id, doc in enumerate(_scene_documents(scene)):
        core_scene = _core_scene_from_dict(doc)
        paths = _core_trace(core_scene, config)
        if filter_policy is not None:
            paths = _core_filter(paths, filter_policy)
        out[listener_id] = _to_arrays(paths)
    return out


def auralize(arrays: dict, order: int = 9, sample_rate: int = 48_000,
             seed: int = 0, tail: float = 0.1) -> np.ndarray:
    """Synthesize an Ambisonic IR from (possibly user-edited) path arrays.

    Returns the [channels x length] float32 sample matrix, identical to the
    core renderer on the same data.
    """
    ps = _to_pathset(arrays)
    config = BandConfig(band_centers_hz=ps.band_centers_hz,
                        sample_rate=sample_rate, noise_seed=seed,
                        tail_padding_s=tail)
    ir = _core_synthesize(ps, order, config)
    return ir.samples.astype(np.float32)


def read_paths(path) -> dict[str, np.ndarray]:
    """Read a Parquet path file into an arrays mapping."""
    return _to_arrays(_core_read(path))


def write_paths(arrays: dict, path, metadata: dict | None = None):
    """Write an arrays mapping to a Parquet path file; returns write stats."""
    return _core_write(_to_pathset(arrays, metadata), path)


py_trace = trace
py_auralize = auralize
