"""Acoustic ray tracing with raw path export, energy filtering, Parquet
storage, and higher-order Ambisonic auralization."""

from .auralize import (
    AmbisonicIR,
    BandConfig,
    eyring_rt60,
    read_wav,
    rt60_from_schroeder,
    synthesize_ir,
    write_wav,
)
from .geometry import (
    Hit,
    Material,
    Scene,
    SceneError,
    load_scene,
    ray_intersect,
    scene_from_dict,
    segment_occluded,
)
from .hoa import sh_eval, sh_eval_batch
from .pathstore import (
    EnergyCoverage,
    FilterPolicy,
    StoreError,
    TopCount,
    TopFraction,
    WriteStats,
    cumulative_energy_curve,
    filter_paths,
    read_paths,
    write_paths,
)
from .tracer import (
    PathRecord,
    PathSet,
    PathType,
    SimConfig,
    direct_visibility,
    trace,
    validate_specular,
)

__version__ = "0.1.0"

__all__ = [
    "AmbisonicIR", "BandConfig", "EnergyCoverage", "FilterPolicy", "Hit",
    "Material", "PathRecord", "PathSet", "PathType", "Scene", "SceneError",
    "SimConfig", "StoreError", "TopCount", "TopFraction", "WriteStats",
    "cumulative_energy_curve", "direct_visibility", "eyring_rt60",
    "filter_paths", "load_scene", "ray_intersect", "read_paths", "read_wav",
    "rt60_from_schroeder", "scene_from_dict", "segment_occluded", "sh_eval",
    "sh_eval_batch", "synthesize_ir", "trace", "validate_specular",
    "write_paths", "write_wav",
]
