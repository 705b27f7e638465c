"""Scene representation, ingestion, and ray-triangle intersection.

Scenes are immutable after construction: triangle soup + per-surface
materials + source/listener placement + band layout. A median-split BVH
accelerates single-ray queries; batched queries against small scenes use a
vectorized all-triangles test instead.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_BAND_CENTERS_HZ = (62.5, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)
DEFAULT_SPEED_OF_SOUND = 343.0
DEFAULT_SOURCE_RADIUS = 0.25
DEFAULT_EPS = 1e-4

BVH_LEAF_SIZE = 4

# Below this many triangles, batched queries use the vectorized
# all-triangles kernel rather than per-ray BVH traversal.
BRUTE_FORCE_TRIANGLE_LIMIT = 64

SHOEBOX_WALL_NAMES = ("wall_x0", "wall_x1", "wall_y0", "wall_y1", "floor", "ceiling")


class SceneError(ValueError):
    """Raised for malformed scene files or invalid scene parameters."""


@dataclass(frozen=True)
class Material:
    """Per-band absorption plus a scalar scattering coefficient."""

    absorption: np.ndarray  # (B,) in [0, 1]
    scattering: float  # in [0, 1]

    def __post_init__(self):
        a = np.asarray(self.absorption, dtype=np.float64)
        object.__setattr__(self, "absorption", a)
        if a.ndim != 1 or a.size < 1:
            raise SceneError("absorption must be a 1-D per-band array")
        if not np.all((a >= 0.0) & (a <= 1.0)):
            raise SceneError(f"absorption outside [0, 1]: {a}")
        if not (0.0 <= self.scattering <= 1.0):
            raise SceneError(f"scattering outside [0, 1]: {self.scattering}")


@dataclass(frozen=True)
class Hit:
    """Nearest intersection of a ray with the scene."""

    surface_id: int
    point: np.ndarray
    distance: float
    normal: np.ndarray


@dataclass
class Scene:
    """Immutable acoustic scene: geometry, materials, endpoints, bands."""

    vertices: np.ndarray  # (N, 3, 3) triangle vertices, meters
    normals: np.ndarray  # (N, 3) unit normals
    material_index: np.ndarray  # (N,) int
    materials: list[Material]
    source: np.ndarray  # (3,)
    listener: np.ndarray  # (3,)
    source_radius: float
    speed_of_sound: float
    band_centers_hz: np.ndarray  # (B,)
    air_absorption: np.ndarray  # (B,) nepers/m
    shoebox_dims: np.ndarray | None = None  # (3,) when built from a shoebox
    scene_hash: str = ""
    # triangle ids (2 per wall) in SHOEBOX_WALL_NAMES order, shoebox only
    wall_triangles: np.ndarray | None = None
    _bvh: "Bvh" = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)
        self.material_index = np.asarray(self.material_index, dtype=np.int64)
        self.source = np.asarray(self.source, dtype=np.float64)
        self.listener = np.asarray(self.listener, dtype=np.float64)
        self.band_centers_hz = np.asarray(self.band_centers_hz, dtype=np.float64)
        self.air_absorption = np.asarray(self.air_absorption, dtype=np.float64)
        _validate_scene(self)
        if self._bvh is None:
            self._bvh = Bvh.build(self.vertices)

    @property
    def num_surfaces(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_bands(self) -> int:
        return self.band_centers_hz.size

    def absorption_table(self) -> np.ndarray:
        """(num_materials, B) absorption matrix."""
        return np.stack([m.absorption for m in self.materials])

    def scattering_table(self) -> np.ndarray:
        """(num_materials,) scattering vector."""
        return np.array([m.scattering for m in self.materials])


def _validate_scene(scene: Scene) -> None:
    n = scene.vertices.shape[0]
    if scene.vertices.shape != (n, 3, 3):
        raise SceneError("vertices must have shape (N, 3, 3)")
    if not np.all(np.isfinite(scene.vertices)):
        raise SceneError("non-finite vertex coordinates")
    e1 = scene.vertices[:, 1] - scene.vertices[:, 0]
    e2 = scene.vertices[:, 2] - scene.vertices[:, 0]
    areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    if np.any(areas <= 1e-12):
        raise SceneError("degenerate triangle (area <= 1e-12 m^2)")
    norms = np.linalg.norm(scene.normals, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-6):
        raise SceneError("surface normals must be unit length")
    dots1 = np.abs(np.einsum("ij,ij->i", scene.normals, e1)) / np.linalg.norm(e1, axis=1)
    dots2 = np.abs(np.einsum("ij,ij->i", scene.normals, e2)) / np.linalg.norm(e2, axis=1)
    if np.any(dots1 > 1e-6) or np.any(dots2 > 1e-6):
        raise SceneError("normal not orthogonal to triangle edges")
    if np.any(scene.material_index < 0) or np.any(scene.material_index >= len(scene.materials)):
        raise SceneError("material index out of range")
    if scene.source_radius <= 0:
        raise SceneError("source radius must be > 0")
    if scene.speed_of_sound <= 0:
        raise SceneError("speed of sound must be > 0")
    b = scene.band_centers_hz
    if b.size < 1 or np.any(np.diff(b) <= 0):
        raise SceneError("band centers must be strictly increasing, B >= 1")
    if scene.air_absorption.shape != b.shape:
        raise SceneError("air absorption must have one coefficient per band")
    for m in scene.materials:
        if m.absorption.size != b.size:
            raise SceneError("material band count does not match scene bands")
    if n > 0:
        lo = scene.vertices.reshape(-1, 3).min(axis=0)
        hi = scene.vertices.reshape(-1, 3).max(axis=0)
        for name, p in (("source", scene.source), ("listener", scene.listener)):
            if np.any(p <= lo) or np.any(p >= hi):
                raise SceneError(f"{name} position outside geometry bounds")


# ---------------------------------------------------------------------------
# BVH

class Bvh:
    """Median-split bounding-volume hierarchy over triangles.

    Flat array layout: internal nodes store child indices, leaves store a
    [start, end) range into the reordered triangle index list.
    """

    __slots__ = ("bounds_lo", "bounds_hi", "left", "right", "start", "count", "order")

    @staticmethod
    def build(vertices: np.ndarray) -> "Bvh":
        n = vertices.shape[0]
        bvh = Bvh()
        if n == 0:
            bvh.bounds_lo = np.zeros((1, 3))
            bvh.bounds_hi = np.zeros((1, 3))
            bvh.left = np.array([-1])
            bvh.right = np.array([-1])
            bvh.start = np.array([0])
            bvh.count = np.array([0])
            bvh.order = np.zeros(0, dtype=np.int64)
            return bvh

        tri_lo = vertices.min(axis=1)
        tri_hi = vertices.max(axis=1)
        centroids = vertices.mean(axis=1)
        order = np.arange(n)

        lo_list, hi_list = [], []
        left_list, right_list = [], []
        start_list, count_list = [], []

        def new_node():
            lo_list.append(None)
            hi_list.append(None)
            left_list.append(-1)
            right_list.append(-1)
            start_list.append(0)
            count_list.append(0)
            return len(lo_list) - 1

        # Iterative build; stack holds (node, start, end) over `order`.
        root = new_node()
        stack = [(root, 0, n)]
        while stack:
            node, s, e = stack.pop()
            idx = order[s:e]
            lo_list[node] = tri_lo[idx].min(axis=0)
            hi_list[node] = tri_hi[idx].max(axis=0)
            if e - s <= BVH_LEAF_SIZE:
                start_list[node] = s
                count_list[node] = e - s
                continue
            cen = centroids[idx]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            mid = (e - s) // 2
            # argsort (not argpartition) keeps the build deterministic
            order[s:e] = idx[np.argsort(cen[:, axis], kind="stable")]
            lc, rc = new_node(), new_node()
            left_list[node], right_list[node] = lc, rc
            stack.append((lc, s, s + mid))
            stack.append((rc, s + mid, e))

        bvh.bounds_lo = np.array(lo_list)
        bvh.bounds_hi = np.array(hi_list)
        bvh.left = np.array(left_list)
        bvh.right = np.array(right_list)
        bvh.start = np.array(start_list)
        bvh.count = np.array(count_list)
        bvh.order = order
        return bvh


def _moller_trumbore(vertices, origin, direction, eps):
    """t values of ray-triangle hits for a (k,3,3) triangle block; inf = miss."""
    v0 = vertices[:, 0]
    e1 = vertices[:, 1] - v0
    e2 = vertices[:, 2] - v0
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = 1.0 / det
        tvec = origin - v0
        u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1)
        v = np.einsum("j,ij->i", direction, qvec) * inv_det
        t = np.einsum("ij,ij->i", e2, qvec) * inv_det
        ok = (np.abs(det) > 1e-14) & (u >= -1e-12) & (v >= -1e-12)
        ok &= (u + v <= 1.0 + 1e-12) & (t > eps)
    return np.where(ok, t, np.inf)


def ray_intersect_brute(scene: Scene, origin, direction, eps: float = DEFAULT_EPS) -> Hit | None:
    """All-triangles nearest intersection; oracle for the BVH path."""
    if scene.num_surfaces == 0:
        return None
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    t = _moller_trumbore(scene.vertices, origin, direction, eps)
    i = int(np.argmin(t))
    if not np.isfinite(t[i]):
        return None
    return Hit(i, origin + t[i] * direction, float(t[i]), scene.normals[i].copy())


def ray_intersect(scene: Scene, origin, direction, eps: float = DEFAULT_EPS) -> Hit | None:
    """Nearest intersection with t > eps via BVH traversal, or None."""
    bvh = scene._bvh
    if scene.num_surfaces == 0:
        return None
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    with np.errstate(divide="ignore"):
        inv_d = 1.0 / direction

    best_t = np.inf
    best_i = -1
    stack = [0]
    while stack:
        node = stack.pop()
        # slab test
        t0 = (bvh.bounds_lo[node] - origin) * inv_d
        t1 = (bvh.bounds_hi[node] - origin) * inv_d
        tmin = np.minimum(t0, t1).max()
        tmax = np.maximum(t0, t1).min()
        if tmax < max(tmin, eps) or tmin > best_t:
            continue
        if bvh.left[node] < 0:
            s, c = bvh.start[node], bvh.count[node]
            idx = bvh.order[s:s + c]
            t = _moller_trumbore(scene.vertices[idx], origin, direction, eps)
            j = int(np.argmin(t))
            if t[j] < best_t:
                best_t = float(t[j])
                best_i = int(idx[j])
        else:
            stack.append(int(bvh.left[node]))
            stack.append(int(bvh.right[node]))
    if best_i < 0:
        return None
    return Hit(best_i, origin + best_t * direction, best_t, scene.normals[best_i].copy())


def intersect_batch(scene: Scene, origins: np.ndarray, directions: np.ndarray,
                    eps: float = DEFAULT_EPS):
    """Nearest hits for a batch of rays.

    Returns (t, tri) with t = inf and tri = -1 for misses. Uses the
    vectorized all-triangles kernel for small scenes, per-ray BVH otherwise.
    """
    n = origins.shape[0]
    if scene.num_surfaces == 0 or n == 0:
        return np.full(n, np.inf), np.full(n, -1, dtype=np.int64)
    if scene.num_surfaces <= BRUTE_FORCE_TRIANGLE_LIMIT:
        v0 = scene.vertices[:, 0]
        e1 = scene.vertices[:, 1] - v0
        e2 = scene.vertices[:, 2] - v0
        pvec = np.cross(directions[:, None, :], e2[None, :, :])
        det = np.einsum("mj,nmj->nm", e1, pvec)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_det = 1.0 / det
            tvec = origins[:, None, :] - v0[None, :, :]
            u = np.einsum("nmj,nmj->nm", tvec, pvec) * inv_det
            qvec = np.cross(tvec, e1[None, :, :])
            v = np.einsum("nj,nmj->nm", directions, qvec) * inv_det
            t = np.einsum("mj,nmj->nm", e2, qvec) * inv_det
            ok = (np.abs(det) > 1e-14) & (u >= -1e-12) & (v >= -1e-12)
            ok &= (u + v <= 1.0 + 1e-12) & (t > eps)
        t = np.where(ok, t, np.inf)
        tri = np.argmin(t, axis=1)
        tbest = t[np.arange(n), tri]
        tri = np.where(np.isfinite(tbest), tri, -1)
        return tbest, tri.astype(np.int64)

    t_out = np.full(n, np.inf)
    tri_out = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        h = ray_intersect(scene, origins[i], directions[i], eps)
        if h is not None:
            t_out[i] = h.distance
            tri_out[i] = h.surface_id
    return t_out, tri_out


def segment_occluded(scene: Scene, a, b, eps: float = DEFAULT_EPS,
                     ignore=None) -> bool:
    """True iff any surface (not in `ignore`) blocks the open segment a->b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = b - a
    length = float(np.linalg.norm(d))
    if length == 0.0:
        raise ValueError("segment endpoints coincide")
    d = d / length
    ignore_set = set(ignore) if ignore else None
    # walk successive hits so ignored surfaces do not shadow real blockers
    t_lo = eps
    while True:
        h = ray_intersect(scene, a, d, t_lo)
        if h is None or h.distance >= length - eps:
            return False
        if ignore_set is None or h.surface_id not in ignore_set:
            return True
        t_lo = h.distance + eps


# ---------------------------------------------------------------------------
# Scene loading

def _shoebox_geometry(dims: np.ndarray):
    """12 triangles (2 per wall) with inward normals, walls in
    SHOEBOX_WALL_NAMES order."""
    lx, ly, lz = dims

    def quad(p0, p1, p2, p3):
        # two triangles sharing the p0-p2 diagonal
        return [np.array([p0, p1, p2]), np.array([p0, p2, p3])]

    walls = {
        "wall_x0": (quad((0, 0, 0), (0, ly, 0), (0, ly, lz), (0, 0, lz)), (1, 0, 0)),
        "wall_x1": (quad((lx, 0, 0), (lx, 0, lz), (lx, ly, lz), (lx, ly, 0)), (-1, 0, 0)),
        "wall_y0": (quad((0, 0, 0), (0, 0, lz), (lx, 0, lz), (lx, 0, 0)), (0, 1, 0)),
        "wall_y1": (quad((0, ly, 0), (lx, ly, 0), (lx, ly, lz), (0, ly, lz)), (0, -1, 0)),
        "floor": (quad((0, 0, 0), (lx, 0, 0), (lx, ly, 0), (0, ly, 0)), (0, 0, 1)),
        "ceiling": (quad((0, 0, lz), (0, ly, lz), (lx, ly, lz), (lx, 0, lz)), (0, 0, -1)),
    }
    tris, normals = [], []
    for name in SHOEBOX_WALL_NAMES:
        quads, nrm = walls[name]
        for tri in quads:
            v = tri.astype(np.float64)
            n_geom = np.cross(v[1] - v[0], v[2] - v[0])
            n_geom /= np.linalg.norm(n_geom)
            # force winding-derived normal to the declared inward direction
            if np.dot(n_geom, nrm) < 0:
                v = v[::-1]
            tris.append(v)
            normals.append(np.asarray(nrm, dtype=np.float64))
    return np.stack(tris), np.stack(normals)


def _load_obj(path: Path):
    """Minimal OBJ reader: v / f / o, fan triangulation, per-object names."""
    verts = []
    tris = []
    tri_objects = []
    current = "default"
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] in ("o", "g"):
            current = parts[1] if len(parts) > 1 else "default"
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):
                tris.append((idx[0], idx[k], idx[k + 1]))
                tri_objects.append(current)
    if not tris:
        raise SceneError(f"no faces in OBJ file {path}")
    v = np.asarray(verts, dtype=np.float64)
    vertices = v[np.asarray(tris, dtype=np.int64)]
    # winding-order normals
    e1 = vertices[:, 1] - vertices[:, 0]
    e2 = vertices[:, 2] - vertices[:, 0]
    normals = np.cross(e1, e2)
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(lens <= 1e-12):
        raise SceneError("degenerate face in OBJ file")
    normals /= lens
    return vertices, normals, tri_objects


def load_scene(path, overrides: dict | None = None) -> Scene:
    """Load a scene JSON file, apply overrides, and build the accelerator.

    Recognized override keys: any top-level scene key, plus ``scale``
    (multiplies all geometry and both endpoint positions).
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneError(f"cannot parse scene file {path}: {exc}") from exc
    return scene_from_dict(raw, overrides, base_dir=path.parent)


def scene_from_dict(raw: dict, overrides: dict | None = None,
                    base_dir: Path | None = None) -> Scene:
    """Build a Scene from a parsed scene document."""
    doc = dict(raw)
    scale = 1.0
    if overrides:
        for key, value in overrides.items():
            if key == "scale":
                scale = float(value)
            else:
                doc[key] = value

    bands = np.asarray(doc.get("bands", DEFAULT_BAND_CENTERS_HZ), dtype=np.float64)
    num_bands = bands.size
    c = float(doc.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND))
    air = np.asarray(doc.get("air_absorption", np.zeros(num_bands)), dtype=np.float64)

    mats_doc = doc.get("materials")
    if not mats_doc:
        raise SceneError("scene file has no materials")
    mat_names = list(mats_doc.keys())
    materials = []
    for name in mat_names:
        m = mats_doc[name]
        a = np.asarray(m["absorption"], dtype=np.float64)
        if a.size == 1:
            a = np.full(num_bands, a.item())
        materials.append(Material(absorption=a, scattering=float(m["scattering"])))
    mat_id = {name: i for i, name in enumerate(mat_names)}

    surf_mats = doc.get("surface_materials", {})
    default_mat = surf_mats.get("*", mat_names[0])

    wall_triangles = None
    shoebox_dims = None
    if "shoebox" in doc:
        box = doc["shoebox"]
        dims = np.array([box["lx"], box["ly"], box["lz"]], dtype=np.float64) * scale
        if np.any(dims <= 0):
            raise SceneError(f"degenerate dimension in shoebox: {dims.tolist()}")
        vertices, normals = _shoebox_geometry(dims)
        tri_names = [w for w in SHOEBOX_WALL_NAMES for _ in range(2)]
        shoebox_dims = dims
        wall_triangles = np.arange(12, dtype=np.int64).reshape(6, 2)
    elif "mesh" in doc:
        mesh_path = Path(doc["mesh"])
        if base_dir is not None and not mesh_path.is_absolute():
            mesh_path = base_dir / mesh_path
        vertices, normals, tri_names = _load_obj(mesh_path)
        vertices = vertices * scale
    else:
        raise SceneError("scene must define either 'shoebox' or 'mesh'")

    try:
        material_index = np.array(
            [mat_id[surf_mats.get(name, default_mat)] for name in tri_names],
            dtype=np.int64)
    except KeyError as exc:
        raise SceneError(f"surface references unknown material {exc}") from exc

    try:
        source = np.asarray(doc["source"]["position"], dtype=np.float64) * scale
        listener = np.asarray(doc["listener"]["position"], dtype=np.float64) * scale
    except KeyError as exc:
        raise SceneError(f"scene missing required field {exc}") from exc
    r_src = float(doc["source"].get("radius", DEFAULT_SOURCE_RADIUS))

    canonical = json.dumps(
        {"doc": _jsonable(doc), "scale": scale}, sort_keys=True, separators=(",", ":"))
    scene_hash = hashlib.sha256(canonical.encode()).hexdigest()[:16]

    return Scene(
        vertices=vertices,
        normals=normals,
        material_index=material_index,
        materials=materials,
        source=source,
        listener=listener,
        source_radius=r_src,
        speed_of_sound=c,
        band_centers_hz=bands,
        air_absorption=air,
        shoebox_dims=shoebox_dims,
        scene_hash=scene_hash,
        wall_triangles=wall_triangles,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
