"""Specular ray tracing against triangle meshes.

Rays leave the emitter over the frontal hemisphere, bounce specularly up to
a fixed depth, and the terminal bounce of each path radiates towards every
receiver through the face's scattering lobe.  Intersection is the standard
signed-determinant barycentric test; an axis-aligned-box pre-cull keeps the
cost down when the target subtends a small solid angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brdf import BrdfField, lobe_profile
from .mesh import Mesh
from .scene import Pose, SensorArray, _as_matrix

_CHUNK_ELEMS = 1 << 22  # rays-times-faces budget per intersection chunk


@dataclass
class RayBundle:
    """Rays sharing one origin (the emitter)."""

    origin: np.ndarray      # (3,)
    directions: np.ndarray  # (n, 3), unit

    def __len__(self):
        return len(self.directions)


@dataclass
class Hit:
    face: int
    t: float
    point: np.ndarray
    u: float
    v: float


def generate_rays(
    n: int,
    pose: Pose | np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    jitter: bool = True,
    array: SensorArray | None = None,
) -> RayBundle:
    """Stratified random directions over the frontal (+x) hemisphere.

    The polar coordinate is stratified into ``n`` equal-solid-angle bands
    (jittered within each band), azimuth is uniform, so the union is exactly
    uniform over the hemisphere while boresight-centred targets receive a
    near-deterministic ray count.  ``jitter=False`` gives the deterministic
    golden-angle lattice.  ``n == 1`` is the exact boresight.  The bundle is
    rotated by the sensor pose; its origin is the posed emitter.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        local = np.array([[1.0, 0.0, 0.0]])
    else:
        i = np.arange(n, dtype=np.float64)
        if jitter:
            if rng is None:
                raise ValueError("jittered sampling needs an rng")
            u = (i + rng.random(n)) / n
            phi = rng.random(n) * (2.0 * np.pi)
        else:
            u = (i + 0.5) / n
            golden = np.pi * (3.0 - np.sqrt(5.0))
            phi = golden * i
        x = 1.0 - u  # cos(theta) in (0, 1]
        r = np.sqrt(np.maximum(0.0, 1.0 - x * x))
        local = np.column_stack([x, r * np.cos(phi), r * np.sin(phi)])

    if pose is None:
        matrix = np.eye(4)
    else:
        matrix = _as_matrix(pose)
    directions = local @ matrix[:3, :3].T
    emitter_local = array.emitter if array is not None else np.zeros(3)
    origin = matrix[:3, :3] @ emitter_local + matrix[:3, 3]
    return RayBundle(origin=origin, directions=directions)


def reflect(direction: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Mirror ``direction`` about the plane with the given normal.

    Insensitive to the normal's sign; preserves length.
    """
    direction = np.asarray(direction, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    d = np.einsum("...i,...i->...", direction, normal)
    return direction - 2.0 * d[..., None] * normal


def _aabb_cull(origins, directions, lo, hi, t_min):
    """Indices of rays whose parameter interval intersects the box."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (lo - origins) / directions
        t1 = (hi - origins) / directions
    near = np.minimum(t0, t1)
    far = np.maximum(t0, t1)
    # rays parallel to a slab: ignore that axis unless outside the slab
    parallel_out = (directions == 0.0) & ((origins < lo) | (origins > hi))
    with np.errstate(invalid="ignore"):
        tn = np.where(np.isnan(near), -np.inf, near).max(axis=1)
        tx = np.where(np.isnan(far), np.inf, far).min(axis=1)
    ok = (tx >= np.maximum(tn, t_min)) & ~parallel_out.any(axis=1)
    return np.flatnonzero(ok)


def intersect_batch(
    origins: np.ndarray,
    directions: np.ndarray,
    mesh: Mesh,
    t_min: float = 1e-9,
):
    """Nearest-hit query for many rays.

    Returns ``(face, t, u, v)`` arrays; ``face`` is -1 where the ray
    misses.  ``origins`` may be a single point shared by all rays.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = len(directions)
    origins = np.broadcast_to(
        np.asarray(origins, dtype=np.float64), directions.shape
    )

    face_out = np.full(n, -1, dtype=np.int64)
    t_out = np.full(n, np.inf)
    u_out = np.zeros(n)
    v_out = np.zeros(n)

    lo, hi = mesh.aabb
    pad = 1e-9 * max(1.0, float(np.max(np.abs(hi - lo))))
    cand = _aabb_cull(origins, directions, lo - pad, hi + pad, t_min)
    if len(cand) == 0:
        return face_out, t_out, u_out, v_out

    tri = mesh.triangles()
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    n_faces = len(v0)
    chunk = max(1, _CHUNK_ELEMS // max(n_faces, 1))

    for s in range(0, len(cand), chunk):
        idx = cand[s:s + chunk]
        o = origins[idx][:, None, :]
        d = directions[idx][:, None, :]
        pvec = np.cross(d, e2[None, :, :])
        det = np.einsum("rfk,fk->rf", pvec, e1)
        tvec = o - v0[None, :, :]
        qvec = np.cross(tvec, e1[None, :, :])
        eps = 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            u = np.einsum("rfk,rfk->rf", tvec, pvec) * inv
            v = np.einsum("rfk,rfk->rf", d, qvec) * inv
            t = np.einsum("rfk,fk->rf", qvec, e2) * inv
            valid = (
                (np.abs(det) > 1e-12)
                & (u >= -eps)
                & (v >= -eps)
                & (u + v <= 1.0 + eps)
                & (t > t_min)
            )
        t = np.where(valid, t, np.inf)
        best = np.argmin(t, axis=1)
        rows = np.arange(len(idx))
        best_t = t[rows, best]
        hit = np.isfinite(best_t)
        sel = idx[hit]
        face_out[sel] = best[hit]
        t_out[sel] = best_t[hit]
        u_out[sel] = np.clip(u[rows, best][hit], 0.0, 1.0)
        v_out[sel] = np.clip(v[rows, best][hit], 0.0, 1.0)
    return face_out, t_out, u_out, v_out


def intersect(origin, direction, mesh: Mesh, t_min: float = 1e-9) -> Hit | None:
    """Single-ray nearest hit, or None."""
    face, t, u, v = intersect_batch(origin, direction, mesh, t_min)
    if face[0] < 0:
        return None
    point = np.asarray(origin, dtype=np.float64) + t[0] * np.asarray(
        direction, dtype=np.float64
    )
    return Hit(face=int(face[0]), t=float(t[0]), point=point,
               u=float(u[0]), v=float(v[0]))


def segments_blocked(starts, ends, mesh: Mesh) -> np.ndarray:
    """True where the open segment from start to end hits the mesh.

    Uses the signed-volume test: a segment crosses a triangle when its
    endpoints straddle the triangle's plane (strictly, so an endpoint lying
    on a face never shadows itself) and the three edge volumes share a
    sign.  Everything reduces to (segments x faces) matrix products, which
    is far cheaper than forming per-pair cross products.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))
    ends = np.atleast_2d(np.asarray(ends, dtype=np.float64))
    starts, ends = np.broadcast_arrays(starts, ends)
    n = len(starts)
    blocked = np.zeros(n, dtype=bool)

    lo, hi = mesh.aabb
    cand = _aabb_cull(starts, ends - starts, lo, hi, 0.0)
    if len(cand) == 0:
        return blocked

    tri = mesh.triangles()
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])  # (f, 3)
    offsets = np.einsum("fk,fk->f", normals, tri[:, 0])
    # edge j from vertex j to j+1: volumes need e_j and e_j x v_j
    edges = np.stack(
        [tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2]]
    )  # (3, f, 3)
    edge_cross = np.stack(
        [
            np.cross(edges[0], tri[:, 0]),
            np.cross(edges[1], tri[:, 1]),
            np.cross(edges[2], tri[:, 2]),
        ]
    )  # (3, f, 3)

    n_faces = len(tri)
    chunk = max(1, _CHUNK_ELEMS // max(n_faces, 1))
    for s in range(0, len(cand), chunk):
        idx = cand[s:s + chunk]
        a = starts[idx]
        b = ends[idx]
        da = a @ normals.T - offsets  # (r, f) plane distances (scaled)
        db = b @ normals.T - offsets
        straddle = da * db < 0.0
        if not np.any(straddle):
            continue
        # crossing parameter along the segment, with an endpoint margin so
        # points sitting on a face (diffraction samples, bounce points)
        # do not shadow themselves
        with np.errstate(divide="ignore", invalid="ignore"):
            t = da / (da - db)
        eps = 1e-6
        straddle &= (t > eps) & (t < 1.0 - eps)
        c = np.cross(a, b)  # (r, 3)
        w = b - a
        vol0 = c @ edges[0].T - w @ edge_cross[0].T
        vol1 = c @ edges[1].T - w @ edge_cross[1].T
        vol2 = c @ edges[2].T - w @ edge_cross[2].T
        same = ((vol0 >= 0) & (vol1 >= 0) & (vol2 >= 0)) | (
            (vol0 <= 0) & (vol1 <= 0) & (vol2 <= 0)
        )
        blocked[idx] = (straddle & same).any(axis=1)
    return blocked


@dataclass
class BounceChains:
    """Specular bounce history for a ray bundle.

    ``faces`` is -1 where a ray has already left the scene.  ``last_dir``
    is the mirror direction after the terminal bounce, the axis of the
    scattering lobe for the receiver pass.
    """

    faces: np.ndarray        # (n, b) int64
    points: np.ndarray      # (n, b, 3)
    seg_lengths: np.ndarray  # (n, b)
    n_bounces: np.ndarray    # (n,)
    path_length: np.ndarray  # (n,) cumulative to the terminal bounce
    last_point: np.ndarray   # (n, 3)
    last_dir: np.ndarray     # (n, 3)

    def __len__(self):
        return len(self.faces)


def trace_paths(
    rays: RayBundle,
    mesh: Mesh,
    brdf: BrdfField | None = None,
    max_bounces: int = 3,
    smooth_normals: bool = False,
) -> BounceChains:
    """Follow specular reflections until escape or the bounce cap.

    ``brdf`` is carried for interface symmetry (gain evaluation happens
    lazily when contributions are formed) but a mismatching face count is
    rejected early.  ``smooth_normals`` reflects about the interpolated
    vertex normal instead of the flat geometric one.
    """
    if brdf is not None and brdf.n_faces != mesh.n_faces:
        raise ValueError("brdf does not belong to this mesh")
    if max_bounces < 1:
        raise ValueError("max_bounces must be >= 1")

    n = len(rays)
    faces = np.full((n, max_bounces), -1, dtype=np.int64)
    points = np.zeros((n, max_bounces, 3))
    seg_lengths = np.zeros((n, max_bounces))
    n_bounces = np.zeros(n, dtype=np.int64)
    path_length = np.zeros(n)
    last_point = np.zeros((n, 3))
    last_dir = rays.directions.copy()

    origins = np.broadcast_to(rays.origin, rays.directions.shape).copy()
    dirs = rays.directions.copy()
    live = np.arange(n)

    for b in range(max_bounces):
        face, t, u, v = intersect_batch(origins, dirs, mesh)
        hit = face >= 0
        if not np.any(hit):
            break
        live = live[hit]
        origins = origins[hit]
        dirs = dirs[hit]
        fh = face[hit]
        th = t[hit]
        pts = origins + th[:, None] * dirs

        faces[live, b] = fh
        points[live, b] = pts
        seg_lengths[live, b] = th
        n_bounces[live] += 1
        path_length[live] += th
        last_point[live] = pts

        if smooth_normals:
            tri_n = mesh.vertex_normals[mesh.faces[fh]]
            w = np.stack([1.0 - u[hit] - v[hit], u[hit], v[hit]], axis=1)
            normals = np.einsum("rc,rck->rk", w, tri_n)
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        else:
            normals = mesh.geometric_normals[fh]
        dirs = reflect(dirs, normals)
        last_dir[live] = dirs
        origins = pts
    return BounceChains(
        faces=faces,
        points=points,
        seg_lengths=seg_lengths,
        n_bounces=n_bounces,
        path_length=path_length,
        last_point=last_point,
        last_dir=last_dir,
    )


@dataclass
class ContributionBatch:
    """Flat table of path-to-receiver contributions.

    Magnitudes are evaluated lazily per chunk: the product of the per-bounce
    reflection gains along the chain times the terminal lobe profile at the
    receiver's off-mirror angle.  ``amplitude`` carries scalar row weights
    (occlusion zeroing, Monte-Carlo 1/M).
    """

    provenance: str
    receiver_idx: np.ndarray  # (rows,)
    path_length: np.ndarray   # (rows,)
    lobe_angle: np.ndarray    # (rows,) radians off the mirror axis
    chain_faces: np.ndarray   # (rows, b) -1-padded, terminal face last valid
    terminal_face: np.ndarray  # (rows,)
    amplitude: np.ndarray     # (rows,)

    def __len__(self):
        return len(self.receiver_idx)

    def magnitudes(self, brdf: BrdfField, rows: slice,
                   freq_idx: np.ndarray | None = None) -> np.ndarray:
        """(chunk, n_freq) spectral magnitudes for a row slice."""
        chain = self.chain_faces[rows]
        theta = self.lobe_angle[rows]
        term = self.terminal_face[rows]
        n_f = len(brdf.freqs) if freq_idx is None else len(freq_idx)
        out = np.ones((len(chain), n_f))
        for b in range(chain.shape[1]):
            fb = chain[:, b]
            sel = fb >= 0
            if not np.any(sel):
                continue
            out[sel] *= brdf.reflection_gain(fb[sel], freq_idx)
        width = brdf.lobe_width(term, freq_idx)
        out *= lobe_profile(theta[:, None], width)
        return out


@dataclass
class Contribution:
    """Single-path contribution, the scalar-API counterpart of the batch."""

    receiver: int
    path_length: float
    magnitude: np.ndarray  # (n_f,)
    provenance: str = "specular"


def sample_to_receivers(
    chains: BounceChains,
    receivers: np.ndarray,
    mesh: Mesh,
    occlusion: bool = True,
) -> ContributionBatch:
    """Terminal-bounce contributions towards every receiver.

    Each path that hit anything radiates from its terminal bounce point to
    each receiver; the off-mirror angle feeds the scattering lobe, and the
    path length extends by the bounce-to-receiver leg.  Occluded legs get
    zero amplitude rather than being dropped, keeping the table layout
    independent of visibility.
    """
    receivers = np.atleast_2d(np.asarray(receivers, dtype=np.float64))
    sel = np.flatnonzero(chains.n_bounces > 0)
    m, n_recv = len(sel), len(receivers)
    b_max = chains.faces.shape[1]

    if m == 0:
        empty = np.zeros(0)
        return ContributionBatch(
            provenance="specular",
            receiver_idx=np.zeros(0, dtype=np.int64),
            path_length=empty,
            lobe_angle=empty,
            chain_faces=np.zeros((0, b_max), dtype=np.int64),
            terminal_face=np.zeros(0, dtype=np.int64),
            amplitude=empty,
        )

    pts = chains.last_point[sel]
    axis = chains.last_dir[sel]
    axis = axis / np.linalg.norm(axis, axis=1, keepdims=True)
    base_path = chains.path_length[sel]
    nb = chains.n_bounces[sel]
    term = chains.faces[sel, nb - 1]

    to_recv = receivers[None, :, :] - pts[:, None, :]  # (m, i, 3)
    dist = np.linalg.norm(to_recv, axis=2)
    cosang = np.einsum("mik,mk->mi", to_recv, axis) / dist
    theta = np.arccos(np.clip(cosang, -1.0, 1.0))

    amplitude = np.ones((m, n_recv))
    if occlusion:
        starts = np.repeat(pts, n_recv, axis=0)
        ends = np.tile(receivers, (m, 1))
        blocked = segments_blocked(starts, ends, mesh).reshape(m, n_recv)
        amplitude[blocked] = 0.0

    return ContributionBatch(
        provenance="specular",
        receiver_idx=np.tile(np.arange(n_recv, dtype=np.int64), m),
        path_length=(base_path[:, None] + dist).ravel(),
        lobe_angle=theta.ravel(),
        chain_faces=np.repeat(chains.faces[sel], n_recv, axis=0),
        terminal_face=np.repeat(term, n_recv),
        amplitude=amplitude.ravel(),
    )
