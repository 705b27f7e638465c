import json

import numpy as np
import pytest

from echoray import scene_from_dict

REFERENCE_SCENE = {
    "shoebox": {"lx": 10.0, "ly": 4.0, "lz": 4.0},
    "materials": {"uniform": {"absorption": [0.3], "scattering": 0.1}},
    "source": {"position": [5.0, 3.0, 0.5], "radius": 0.25},
    "listener": {"position": [1.0, 1.0, 0.5]},
}


@pytest.fixture
def reference_scene_dict():
    return json.loads(json.dumps(REFERENCE_SCENE))


@pytest.fixture
def reference_scene(reference_scene_dict):
    return scene_from_dict(reference_scene_dict)


@pytest.fixture
def pure_specular_scene(reference_scene_dict):
    reference_scene_dict["materials"]["uniform"]["scattering"] = 0.0
    return scene_from_dict(reference_scene_dict)


@pytest.fixture
def scene_file(tmp_path, reference_scene_dict):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(reference_scene_dict))
    return path


def make_pathset(energies, band_centers=(62.5, 125.0), distances=None):
    """Synthetic PathSet with given per-path total energies, spread evenly
    over the bands."""
    from echoray import PathSet

    e = np.asarray(energies, dtype=np.float64)
    n = e.size
    B = len(band_centers)
    d = np.asarray(distances, dtype=np.float64) if distances is not None \
        else np.full(n, 10.0)
    ldir = np.tile([1.0, 0.0, 0.0], (n, 1))
    return PathSet(
        source_index=np.zeros(n, dtype=np.int64),
        path_type=np.full(n, 2, dtype=np.int64),
        distance=d,
        listener_direction=ldir,
        source_direction=-ldir,
        relative_speed=np.zeros(n),
        speed_of_sound=np.full(n, 343.0),
        intensities=np.tile((e / B)[:, None], (1, B)),
        band_centers_hz=np.asarray(band_centers, dtype=np.float64),
        metadata={"scene_hash": "test", "seed": 0,
                  "source_position": [0, 0, 0], "listener_position": [1, 0, 0]},
    )
