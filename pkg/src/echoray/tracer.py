"""Path tracing: listener-cast specular and diffuse ray populations.

Specular paths in shoebox rooms come from exhaustive image-source
enumeration up to the depth cap (exact, and cheap for six walls); mesh
scenes fall back to stochastic specular discovery confirmed by
`validate_specular`. Diffuse paths are traced stochastically with
cosine-weighted scattering and registered by source-sphere intersection.

All randomness is drawn per fixed-size ray chunk from counter-based
generators keyed on (seed, chunk index), so results are bit-identical
regardless of worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .geometry import (
    DEFAULT_EPS,
    Scene,
    intersect_batch,
    ray_intersect,
    segment_occluded,
)

RAY_CHUNK = 65536

_RNG_TAG_VISIBILITY = 1
_RNG_TAG_DIFFUSE = 2
_RNG_TAG_SPECULAR = 3


class PathType(IntEnum):
    DIRECT = 0
    SPECULAR = 1
    DIFFUSE = 2
    DIFFRACTION = 3  # reserved; never produced


@dataclass(frozen=True)
class SimConfig:
    n_diffuse: int = 20_000
    n_specular: int = 2_000
    max_specular_depth: int = 8
    max_diffuse_depth: int = 32
    rng_seed: int = 0
    visibility_samples: int = 64
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.n_diffuse < 0 or self.n_specular < 0:
            raise ValueError("ray counts must be >= 0")
        if self.max_specular_depth < 1 or self.max_diffuse_depth < 1:
            raise ValueError("depths must be >= 1")
        if self.visibility_samples < 1:
            raise ValueError("visibility_samples must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class PathRecord:
    """One validated propagation path."""

    source_index: int
    path_type: PathType
    distance: float
    listener_direction: np.ndarray  # unit, direction of arrival at listener
    source_direction: np.ndarray  # unit, from the source toward its segment
    relative_speed: float
    speed_of_sound: float
    intensities: np.ndarray  # (B,) per-band energy


@dataclass
class PathSet:
    """Column-oriented collection of validated paths."""

    source_index: np.ndarray  # (N,) int
    path_type: np.ndarray  # (N,) int
    distance: np.ndarray  # (N,) float
    listener_direction: np.ndarray  # (N, 3)
    source_direction: np.ndarray  # (N, 3)
    relative_speed: np.ndarray  # (N,)
    speed_of_sound: np.ndarray  # (N,)
    intensities: np.ndarray  # (N, B)
    band_centers_hz: np.ndarray  # (B,)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.num_paths
        if not (self.path_type.shape == self.distance.shape == (n,)
                and self.listener_direction.shape == (n, 3)
                and self.source_direction.shape == (n, 3)
                and self.relative_speed.shape == (n,)
                and self.speed_of_sound.shape == (n,)
                and self.intensities.shape == (n, self.num_bands)):
            raise ValueError("PathSet columns have inconsistent shapes")

    @property
    def num_paths(self) -> int:
        return self.source_index.shape[0]

    @property
    def num_bands(self) -> int:
        return self.band_centers_hz.size

    def total_energy(self) -> np.ndarray:
        """(N,) per-path energy summed over bands."""
        return self.intensities.sum(axis=1)

    def take(self, indices: np.ndarray, metadata: dict | None = None) -> "PathSet":
        """Row subset, preserving band layout and metadata."""
        md = dict(self.metadata)
        if metadata:
            md.update(metadata)
        return PathSet(
            source_index=self.source_index[indices],
            path_type=self.path_type[indices],
            distance=self.distance[indices],
            listener_direction=self.listener_direction[indices],
            source_direction=self.source_direction[indices],
            relative_speed=self.relative_speed[indices],
            speed_of_sound=self.speed_of_sound[indices],
            intensities=self.intensities[indices],
            band_centers_hz=self.band_centers_hz,
            metadata=md,
        )

    def counts_by_type(self) -> dict[str, int]:
        return {t.name.lower(): int(np.sum(self.path_type == t.value))
                for t in (PathType.DIRECT, PathType.SPECULAR, PathType.DIFFUSE)}


def _empty_columns(num_bands: int):
    return dict(
        source_index=np.zeros(0, dtype=np.int64),
        path_type=np.zeros(0, dtype=np.int64),
        distance=np.zeros(0),
        listener_direction=np.zeros((0, 3)),
        source_direction=np.zeros((0, 3)),
        relative_speed=np.zeros(0),
        speed_of_sound=np.zeros(0),
        intensities=np.zeros((0, num_bands)),
    )


def _rng(seed: int, *tags: int) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, *tags]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def _air_factor(scene: Scene, distance) -> np.ndarray:
    """exp(-alpha_air,b * d); broadcasts distance against the band axis."""
    d = np.asarray(distance, dtype=np.float64)
    return np.exp(-scene.air_absorption * d[..., None])


# ---------------------------------------------------------------------------
# Direct path

def direct_visibility(scene: Scene, config: SimConfig) -> float:
    """Average visibility of the source sphere from the listener.

    Samples `visibility_samples` directions uniformly within the cone
    subtended by the source sphere and counts unoccluded ones.
    """
    to_src = scene.source - scene.listener
    dist = float(np.linalg.norm(to_src))
    if dist <= scene.source_radius:
        return 1.0
    w = to_src / dist
    sin_theta = min(1.0, scene.source_radius / dist)
    cos_theta = np.sqrt(max(0.0, 1.0 - sin_theta * sin_theta))

    rng = _rng(config.rng_seed, _RNG_TAG_VISIBILITY)
    n = config.visibility_samples
    u = rng.random((n, 2))
    cos_a = 1.0 - u[:, 0] * (1.0 - cos_theta)  # uniform in solid angle
    sin_a = np.sqrt(np.maximum(0.0, 1.0 - cos_a * cos_a))
    phi = 2.0 * np.pi * u[:, 1]

    t_axis, b_axis = _orthonormal_basis(w[None, :])
    dirs = (sin_a * np.cos(phi))[:, None] * t_axis \
        + (sin_a * np.sin(phi))[:, None] * b_axis \
        + cos_a[:, None] * w

    clear = 0
    for i in range(n):
        d = dirs[i]
        # entry point of this ray into the source sphere
        oc = scene.listener - scene.source
        b = float(np.dot(oc, d))
        disc = b * b - (float(np.dot(oc, oc)) - scene.source_radius ** 2)
        if disc <= 0.0:
            # ray grazes past the sphere (cone-edge rounding); count as clear
            t_entry = dist
        else:
            t_entry = -b - np.sqrt(disc)
        target = scene.listener + t_entry * d
        if not segment_occluded(scene, scene.listener, target, config.eps):
            clear += 1
    return clear / n


def _direct_record(scene: Scene, config: SimConfig) -> PathRecord | None:
    v = direct_visibility(scene, config)
    if v <= 0.0:
        return None
    delta = scene.source - scene.listener
    d = float(np.linalg.norm(delta))
    if d == 0.0:
        return None
    u = delta / d
    energy = v * _air_factor(scene, d) / (4.0 * np.pi * d * d)
    return PathRecord(
        source_index=0,
        path_type=PathType.DIRECT,
        distance=d,
        listener_direction=u,
        source_direction=-u,
        relative_speed=0.0,
        speed_of_sound=scene.speed_of_sound,
        intensities=energy,
    )


# ---------------------------------------------------------------------------
# Specular: exact image-source enumeration for shoebox scenes

def shoebox_wall_planes(scene: Scene):
    """(axis, offset) per wall in SHOEBOX_WALL_NAMES order."""
    if scene.shoebox_dims is None:
        raise ValueError("scene is not a shoebox")
    lx, ly, lz = scene.shoebox_dims
    return np.array([0, 0, 1, 1, 2, 2]), np.array([0.0, lx, 0.0, ly, 0.0, lz])


def enumerate_specular_shoebox(scene: Scene, max_depth: int):
    """All valid specular wall sequences up to `max_depth`.

    Returns (sequences, distance, energy, listener_dir, source_dir) where
    `sequences` is a list of wall-index tuples (SHOEBOX_WALL_NAMES order)
    and the arrays are aligned with it. Enumeration order is depth-major,
    lexicographic within a depth, hence deterministic.
    """
    axes, offsets = shoebox_wall_planes(scene)
    dims = scene.shoebox_dims
    L = scene.listener
    S = scene.source

    wall_mat = scene.material_index[scene.wall_triangles[:, 0]]
    alpha = scene.absorption_table()[wall_mat]  # (6, B)
    scat = scene.scattering_table()[wall_mat]  # (6,)
    wall_factor = (1.0 - alpha) * (1.0 - scat)[:, None]  # (6, B)

    def mirror(points, walls):
        out = points.copy()
        a = axes[walls]
        rows = np.arange(points.shape[0])
        out[rows, a] = 2.0 * offsets[walls] - points[rows, a]
        return out

    seqs = np.arange(6, dtype=np.int64)[:, None]  # (N, depth)
    images = mirror(np.broadcast_to(S, (6, 3)).copy(), seqs[:, 0])
    factors = wall_factor.copy()  # (N, B)

    all_seqs: list[tuple[int, ...]] = []
    dists, energies, l_dirs, s_dirs = [], [], [], []

    for depth in range(1, max_depth + 1):
        ok, dist, ldir, sdir = _validate_shoebox_batch(
            seqs, images, axes, offsets, dims, L, S)
        if np.any(ok):
            idx = np.nonzero(ok)[0]
            for i in idx:
                all_seqs.append(tuple(int(w) for w in seqs[i]))
            dists.append(dist[idx])
            e = factors[idx] * _air_factor(scene, dist[idx]) \
                / (4.0 * np.pi * dist[idx] ** 2)[:, None]
            energies.append(e)
            l_dirs.append(ldir[idx])
            s_dirs.append(sdir[idx])
        if depth == max_depth:
            break
        # extend: 5 children per sequence (no immediate wall repetition)
        last = seqs[:, -1]
        nxt = np.array([[w for w in range(6) if w != p] for p in last],
                       dtype=np.int64)  # (N, 5)
        n = seqs.shape[0]
        parent = np.repeat(np.arange(n), 5)
        child_wall = nxt.reshape(-1)
        seqs = np.concatenate([seqs[parent], child_wall[:, None]], axis=1)
        images = mirror(images[parent], child_wall)
        factors = factors[parent] * wall_factor[child_wall]

    if dists:
        return (all_seqs, np.concatenate(dists), np.concatenate(energies),
                np.concatenate(l_dirs), np.concatenate(s_dirs))
    B = scene.num_bands
    return [], np.zeros(0), np.zeros((0, B)), np.zeros((0, 3)), np.zeros((0, 3))


def _validate_shoebox_batch(seqs, images, axes, offsets, dims, listener, source):
    """Backward reflection-point recovery for a batch of wall sequences.

    The room is convex and empty, so validity reduces to every recovered
    reflection point lying on its wall rectangle with a strictly increasing
    segment parameter; no occlusion tests are needed.
    """
    n, depth = seqs.shape
    rows = np.arange(n)
    p = np.broadcast_to(listener, (n, 3)).copy()
    img = images.copy()
    ok = np.ones(n, dtype=bool)
    first_q = None
    for j in range(depth - 1, -1, -1):
        w = seqs[:, j]
        a = axes[w]
        o = offsets[w]
        pa = p[rows, a]
        ia = img[rows, a]
        denom = ia - pa
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (o - pa) / denom
            ok &= (np.abs(denom) > 1e-14) & (t > 1e-12) & (t < 1.0 - 1e-12)
            q = p + np.where(np.isfinite(t), t, 0.0)[:, None] * (img - p)
        q[rows, a] = o
        ok &= np.all((q >= -1e-9) & (q <= dims + 1e-9), axis=1)
        if first_q is None:
            first_q = q
        p = q
        # peel off the innermost mirror: image of the (j-1)-prefix
        img[rows, a] = 2.0 * o - img[rows, a]

    dist = np.linalg.norm(images - listener, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ldir = first_q - listener
        ldir /= np.linalg.norm(ldir, axis=1, keepdims=True)
        sdir = p - source  # p is now the reflection point adjacent to the source
        sdir /= np.linalg.norm(sdir, axis=1, keepdims=True)
    return ok, dist, ldir, sdir


def validate_specular(scene: Scene, surface_sequence, eps: float | None = None
                      ) -> PathRecord | None:
    """Image-source validation of an ordered surface-id sequence.

    Mirrors the source across the surface planes, recovers reflection
    points backward from the listener, and rejects the sequence if any
    point falls outside its triangle or any segment is occluded.
    """
    seq = [int(s) for s in surface_sequence]
    if not seq:
        return None
    if any(s < 0 or s >= scene.num_surfaces for s in seq):
        return None
    if any(a == b for a, b in zip(seq, seq[1:])):
        return None
    if eps is None:
        eps = DEFAULT_EPS

    v0 = scene.vertices[seq, 0]
    normals = scene.normals[seq]

    # forward images of the source
    images = [scene.source]
    for j in range(len(seq)):
        p = images[-1]
        dist_plane = np.dot(normals[j], p - v0[j])
        images.append(p - 2.0 * dist_plane * normals[j])

    # backward recovery of reflection points
    p = scene.listener
    points = []
    prev_surface = None
    for j in range(len(seq) - 1, -1, -1):
        target = images[j + 1]
        n = normals[j]
        denom = np.dot(n, target - p)
        if abs(denom) < 1e-14:
            return None
        t = np.dot(n, v0[j] - p) / denom
        if not (1e-12 < t < 1.0 - 1e-12):
            return None
        q = p + t * (target - p)
        if not _point_in_triangle(scene.vertices[seq[j]], q):
            return None
        ignore = {seq[j]}
        if prev_surface is not None:
            ignore.add(prev_surface)
        if segment_occluded(scene, p, q, eps, ignore=ignore):
            return None
        prev_surface = seq[j]
        p = q
        points.append(q)

    if segment_occluded(scene, p, scene.source, eps, ignore={seq[0]}):
        return None

    dist = float(np.linalg.norm(images[-1] - scene.listener))
    mats = scene.material_index[seq]
    alpha = scene.absorption_table()[mats]
    scat = scene.scattering_table()[mats]
    factor = np.prod((1.0 - alpha) * (1.0 - scat)[:, None], axis=0)
    energy = factor * _air_factor(scene, dist) / (4.0 * np.pi * dist * dist)
    ldir = points[0] - scene.listener
    ldir = ldir / np.linalg.norm(ldir)
    sdir = points[-1] - scene.source
    sdir = sdir / np.linalg.norm(sdir)
    return PathRecord(
        source_index=0,
        path_type=PathType.SPECULAR,
        distance=dist,
        listener_direction=ldir,
        source_direction=sdir,
        relative_speed=0.0,
        speed_of_sound=scene.speed_of_sound,
        intensities=energy,
    )


def _point_in_triangle(tri: np.ndarray, p: np.ndarray, tol: float = 1e-9) -> bool:
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    w = p - tri[0]
    d11 = np.dot(e1, e1)
    d12 = np.dot(e1, e2)
    d22 = np.dot(e2, e2)
    dw1 = np.dot(w, e1)
    dw2 = np.dot(w, e2)
    det = d11 * d22 - d12 * d12
    if det == 0.0:
        return False
    u = (d22 * dw1 - d12 * dw2) / det
    v = (d11 * dw2 - d12 * dw1) / det
    return u >= -tol and v >= -tol and u + v <= 1.0 + tol


# ---------------------------------------------------------------------------
# Stochastic populations (diffuse everywhere; specular discovery for meshes)

def _orthonormal_basis(n: np.ndarray):
    """Deterministic tangent/bitangent for each unit normal row."""
    h = np.where(np.abs(n[:, 2:3]) < 0.9,
                 np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    t = np.cross(n, h)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    b = np.cross(n, t)
    return t, b


def _uniform_sphere(u: np.ndarray) -> np.ndarray:
    """(n, 2) uniform variates -> (n, 3) uniform unit directions."""
    z = 1.0 - 2.0 * u[:, 0]
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * np.pi * u[:, 1]
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _cosine_hemisphere(n: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    t, b = _orthonormal_basis(n)
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    local_z = np.sqrt(np.maximum(0.0, 1.0 - u1))
    return (r * np.cos(phi))[:, None] * t + (r * np.sin(phi))[:, None] * b \
        + local_z[:, None] * n


def _sphere_entry(origins, dirs, center, radius):
    """Entry parameter t of each ray into the sphere; inf when missed."""
    oc = origins - center
    b = np.einsum("ij,ij->i", oc, dirs)
    c0 = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c0
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    hit = (disc > 0.0) & (t > 1e-9)
    return np.where(hit, t, np.inf)


def _trace_diffuse_chunk(scene: Scene, config: SimConfig, chunk_index: int,
                         chunk_size: int, register_direct: bool):
    """Trace one chunk of diffuse rays; returns per-registration arrays."""
    depth = config.max_diffuse_depth
    rng = _rng(config.rng_seed, _RNG_TAG_DIFFUSE, chunk_index)
    u = rng.random((chunk_size, 2 + 3 * depth))

    alpha = scene.absorption_table()  # (M, B)
    scat = scene.scattering_table()  # (M,)
    n_rays = chunk_size

    dirs0 = _uniform_sphere(u[:, :2])
    pos = np.broadcast_to(scene.listener, (n_rays, 3)).copy()
    direction = dirs0.copy()
    weight = np.full((n_rays, scene.num_bands), 1.0 / max(1, config.n_diffuse))
    travelled = np.zeros(n_rays)
    diffuse_bounces = np.zeros(n_rays, dtype=np.int64)
    active = np.ones(n_rays, dtype=bool)

    reg_ray, reg_seg, reg_dist, reg_energy, reg_sdir = [], [], [], [], []
    ray_ids = np.arange(n_rays)

    for seg in range(depth + 1):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        p = pos[idx]
        d = direction[idx]
        t_wall, tri = intersect_batch(scene, p, d, config.eps)

        # registration: segment crosses the source sphere before the wall
        t_sph = _sphere_entry(p, d, scene.source, scene.source_radius)
        eligible = diffuse_bounces[idx] >= 1 if not register_direct \
            else np.ones(idx.size, dtype=bool)
        hit_sph = (t_sph < t_wall) & eligible
        if np.any(hit_sph):
            h = np.nonzero(hit_sph)[0]
            dist = travelled[idx[h]] + t_sph[h]
            energy = weight[idx[h]] * _air_factor(scene, dist) \
                / (np.pi * scene.source_radius ** 2)
            sdir = p[h] - scene.source
            sdir = sdir / np.linalg.norm(sdir, axis=1, keepdims=True)
            reg_ray.append(ray_ids[idx[h]])
            reg_seg.append(np.full(h.size, seg, dtype=np.int64))
            reg_dist.append(dist)
            reg_energy.append(energy)
            reg_sdir.append(sdir)

        if seg == depth:
            break

        # advance to the wall and scatter
        wall_hit = np.isfinite(t_wall) & (tri >= 0)
        dead = idx[~wall_hit]
        active[dead] = False
        k = np.nonzero(wall_hit)[0]
        if k.size == 0:
            continue
        rows = idx[k]
        hit_p = p[k] + t_wall[k, None] * d[k]
        tri_k = tri[k]
        mats = scene.material_index[tri_k]
        normals = scene.normals[tri_k]
        # orient normals against the incoming direction
        facing = np.einsum("ij,ij->i", normals, d[k]) < 0.0
        normals = np.where(facing[:, None], normals, -normals)

        travelled[rows] += t_wall[k]
        weight[rows] *= (1.0 - alpha[mats])

        u_branch = u[rows, 2 + 3 * seg]
        u1 = u[rows, 3 + 3 * seg]
        u2 = u[rows, 4 + 3 * seg]
        go_diffuse = u_branch < scat[mats]

        mirror = d[k] - 2.0 * np.einsum("ij,ij->i", d[k], normals)[:, None] * normals
        lam = _cosine_hemisphere(normals, u1, u2)
        new_dir = np.where(go_diffuse[:, None], lam, mirror)
        new_dir /= np.linalg.norm(new_dir, axis=1, keepdims=True)

        diffuse_bounces[rows] += go_diffuse
        pos[rows] = hit_p + config.eps * normals
        direction[rows] = new_dir

    if not reg_ray:
        B = scene.num_bands
        return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                np.zeros(0), np.zeros((0, B)), np.zeros((0, 3)), np.zeros((0, 3)))

    ray = np.concatenate(reg_ray)
    segs = np.concatenate(reg_seg)
    dist = np.concatenate(reg_dist)
    energy = np.concatenate(reg_energy)
    sdir = np.concatenate(reg_sdir)
    ldir = dirs0[ray]
    # canonical (ray, segment) order so chunk merging is reproducible
    order = np.lexsort((segs, ray))
    return ray[order], segs[order], dist[order], energy[order], sdir[order], ldir[order]


def trace_diffuse(scene: Scene, config: SimConfig, workers: int = 1,
                  register_direct: bool = False):
    """All diffuse registrations for config.n_diffuse listener rays.

    Returns (distance, energy, listener_dir, source_dir) arrays sorted by
    global ray index. `register_direct` additionally registers sphere hits
    on segments with no prior diffuse bounce (used by the estimator
    consistency check; production tracing leaves it off so the direct path
    stays deterministic).
    """
    n = config.n_diffuse
    B = scene.num_bands
    if n == 0:
        return np.zeros(0), np.zeros((0, B)), np.zeros((0, 3)), np.zeros((0, 3))
    chunks = [(ci, min(RAY_CHUNK, n - ci * RAY_CHUNK))
              for ci in range((n + RAY_CHUNK - 1) // RAY_CHUNK)]

    def run(chunk):
        ci, size = chunk
        return _trace_diffuse_chunk(scene, config, ci, size, register_direct)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]

    dist = np.concatenate([r[2] for r in results])
    energy = np.concatenate([r[3] for r in results])
    sdir = np.concatenate([r[4] for r in results])
    ldir = np.concatenate([r[5] for r in results])
    return dist, energy, ldir, sdir


def _discover_specular_mesh(scene: Scene, config: SimConfig):
    """Stochastic specular discovery: mirror-bounce rays from the listener,
    collect surface-id sequences whose segment reaches the source sphere,
    dedup, then confirm each candidate with validate_specular."""
    n = config.n_specular
    depth = config.max_specular_depth
    candidates: dict[tuple[int, ...], None] = {}
    done = 0
    ci = 0
    while done < n:
        size = min(RAY_CHUNK, n - done)
        rng = _rng(config.rng_seed, _RNG_TAG_SPECULAR, ci)
        u = rng.random((size, 2))
        pos = np.broadcast_to(scene.listener, (size, 3)).copy()
        direction = _uniform_sphere(u)
        seq = np.full((size, depth), -1, dtype=np.int64)
        active = np.ones(size, dtype=bool)
        for seg in range(depth + 1):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            t_wall, tri = intersect_batch(scene, pos[idx], direction[idx], config.eps)
            t_sph = _sphere_entry(pos[idx], direction[idx],
                                  scene.source, scene.source_radius)
            if seg >= 1:
                hit_sph = t_sph < t_wall
                for row in np.nonzero(hit_sph)[0]:
                    key = tuple(int(s) for s in seq[idx[row], :seg])
                    # listener-cast hit order is the source-to-listener
                    # sequence reversed
                    candidates.setdefault(key[::-1], None)
            if seg == depth:
                break
            wall = np.isfinite(t_wall) & (tri >= 0)
            active[idx[~wall]] = False
            k = np.nonzero(wall)[0]
            if k.size == 0:
                continue
            rows = idx[k]
            normals = scene.normals[tri[k]]
            facing = np.einsum("ij,ij->i", normals, direction[rows]) < 0.0
            normals = np.where(facing[:, None], normals, -normals)
            hit_p = pos[rows] + t_wall[k, None] * direction[rows]
            mirror = direction[rows] - 2.0 * np.einsum(
                "ij,ij->i", direction[rows], normals)[:, None] * normals
            seq[rows, seg] = tri[k]
            pos[rows] = hit_p + config.eps * normals
            direction[rows] = mirror
        done += size
        ci += 1

    records = []
    sequences = []
    for key in candidates:
        rec = validate_specular(scene, key, config.eps)
        if rec is not None:
            records.append(rec)
            sequences.append(key)
    return sequences, records


# ---------------------------------------------------------------------------
# Top-level trace

def trace(scene: Scene, config: SimConfig, workers: int = 1) -> PathSet:
    """Cast the configured ray populations and return all validated paths.

    The result is deterministic for a fixed (scene, config) at any worker
    count: direct path first, then specular paths in enumeration order,
    then diffuse registrations ordered by ray index.
    """
    B = scene.num_bands
    records: list[PathRecord] = []

    direct = _direct_record(scene, config)
    if direct is not None:
        records.append(direct)

    spec_sequences: list[tuple[int, ...]] = []
    if config.n_specular > 0:
        if scene.shoebox_dims is not None:
            seqs, dist, energy, ldir, sdir = enumerate_specular_shoebox(
                scene, config.max_specular_depth)
            spec_sequences = seqs
            for i in range(len(seqs)):
                records.append(PathRecord(
                    source_index=0,
                    path_type=PathType.SPECULAR,
                    distance=float(dist[i]),
                    listener_direction=ldir[i],
                    source_direction=sdir[i],
                    relative_speed=0.0,
                    speed_of_sound=scene.speed_of_sound,
                    intensities=energy[i],
                ))
        else:
            spec_sequences, spec_records = _discover_specular_mesh(scene, config)
            records.extend(spec_records)

    d_dist, d_energy, d_ldir, d_sdir = trace_diffuse(scene, config, workers)

    n = len(records) + d_dist.size
    cols = _empty_columns(B)
    if n:
        src = np.zeros(n, dtype=np.int64)
        ptype = np.empty(n, dtype=np.int64)
        dist = np.empty(n)
        ldir = np.empty((n, 3))
        sdir = np.empty((n, 3))
        inten = np.empty((n, B))
        for i, r in enumerate(records):
            ptype[i] = int(r.path_type)
            dist[i] = r.distance
            ldir[i] = r.listener_direction
            sdir[i] = r.source_direction
            inten[i] = r.intensities
        k = len(records)
        ptype[k:] = int(PathType.DIFFUSE)
        dist[k:] = d_dist
        ldir[k:] = d_ldir
        sdir[k:] = d_sdir
        inten[k:] = d_energy
        cols = dict(
            source_index=src,
            path_type=ptype,
            distance=dist,
            listener_direction=ldir,
            source_direction=sdir,
            relative_speed=np.zeros(n),
            speed_of_sound=np.full(n, scene.speed_of_sound),
            intensities=inten,
        )

    metadata = {
        "scene_hash": scene.scene_hash,
        "seed": int(config.rng_seed),
        "config": config.to_dict(),
        "source_position": scene.source.tolist(),
        "listener_position": scene.listener.tolist(),
        "filter_policy": "none",
    }
    ps = PathSet(band_centers_hz=scene.band_centers_hz, metadata=metadata, **cols)
    ps.metadata["specular_sequences"] = spec_sequences
    return ps
