"""Discrete curvature from the variation of vertex normals.

Per face, the change of the (smoothed) vertex normals along the three edges
is least-squares fitted to a 2x2 second fundamental form in the face's
tangent frame.  Face tensors are rotated into per-vertex tangent frames and
blended with mixed Voronoi corner weights, giving a tensor per vertex whose
eigenvalues are the principal curvatures.  Convex regions of an outward-
oriented mesh come out with positive curvature.

The per-face scalar ``face_curvature`` (mean over the three corners of
max(|k1|, |k2|)) is what the reflection model and the diffraction sampler
consume.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import IsolatedVertexWarning
from .mesh import Mesh


@dataclass
class CurvatureField:
    """Per-vertex curvature tensors and the per-face summary scalar."""

    tensors: np.ndarray         # (v, 2, 2) in per-vertex tangent frames
    frames: np.ndarray          # (v, 2, 3) tangent basis rows (u, v)
    kappa1: np.ndarray          # (v,) larger principal curvature, 1/m
    kappa2: np.ndarray          # (v,) smaller principal curvature, 1/m
    face_curvature: np.ndarray  # (f,) mean corner max(|k1|, |k2|)

    @property
    def vertex_max_abs(self) -> np.ndarray:
        return np.maximum(np.abs(self.kappa1), np.abs(self.kappa2))


def _perpendicular(n: np.ndarray) -> np.ndarray:
    """A unit vector orthogonal to each row of ``n``, chosen smoothly away
    from the row's smallest component axis."""
    out = np.zeros_like(n)
    smallest = np.argmin(np.abs(n), axis=1)
    out[np.arange(len(n)), smallest] = 1.0
    out -= n * np.einsum("ij,ij->i", out, n)[:, None]
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _rotate_frame_to_normal(u, v, target_normal):
    """Rotate tangent frames (u, v) so their normal u x v becomes
    ``target_normal``, by the minimal rotation.  Vectorised."""
    old_n = np.cross(u, v)
    ndot = np.einsum("ij,ij->i", old_n, target_normal)
    # antiparallel normals: any 180 degree flip serves
    flip = ndot <= -1.0 + 1e-12
    safe = np.where(flip, 1.0, 1.0 + ndot)
    perp = target_normal - ndot[:, None] * old_n
    dperp = (old_n + target_normal) / safe[:, None]
    new_u = u - dperp * np.einsum("ij,ij->i", u, perp)[:, None]
    new_v = v - dperp * np.einsum("ij,ij->i", v, perp)[:, None]
    new_u[flip] = -u[flip]
    new_v[flip] = -v[flip]
    return new_u, new_v


def _corner_areas(tri: np.ndarray, areas: np.ndarray) -> np.ndarray:
    """Mixed Voronoi corner areas, (f, 3).  Obtuse triangles fall back to
    the half/quarter split so weights stay positive."""
    e = np.stack(
        [tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2], tri[:, 1] - tri[:, 0]],
        axis=1,
    )  # e[:, j] is the edge opposite corner j
    l2 = np.einsum("fjk,fjk->fj", e, e)
    ew = np.stack(
        [
            l2[:, 0] * (l2[:, 1] + l2[:, 2] - l2[:, 0]),
            l2[:, 1] * (l2[:, 2] + l2[:, 0] - l2[:, 1]),
            l2[:, 2] * (l2[:, 0] + l2[:, 1] - l2[:, 2]),
        ],
        axis=1,
    )
    total = ew.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = 0.5 * areas / total
        # corner j collects the weights of its two adjacent edges
        corner = np.stack(
            [
                ew[:, 1] + ew[:, 2],
                ew[:, 2] + ew[:, 0],
                ew[:, 0] + ew[:, 1],
            ],
            axis=1,
        ) * scale[:, None]

    for j in range(3):
        bad = ew[:, j] <= 0.0
        if not np.any(bad):
            continue
        jn, jp = (j + 1) % 3, (j + 2) % 3
        dot_n = np.einsum("ij,ij->i", e[bad, j], e[bad, jp])
        dot_p = np.einsum("ij,ij->i", e[bad, j], e[bad, jn])
        c_n = -0.25 * l2[bad, jp] * areas[bad] / np.where(dot_n != 0, dot_n, 1.0)
        c_p = -0.25 * l2[bad, jn] * areas[bad] / np.where(dot_p != 0, dot_p, 1.0)
        corner[bad, jn] = c_n
        corner[bad, jp] = c_p
        corner[bad, j] = areas[bad] - c_n - c_p
    return corner


def estimate_curvature(mesh: Mesh) -> CurvatureField:
    """Estimate principal curvatures at vertices and the face summary."""
    verts, faces = mesh.vertices, mesh.faces
    normals = mesh.vertex_normals
    tri = verts[faces]
    nrm = normals[faces]

    # face tangent frame: first edge direction and its in-plane complement
    e = np.stack(
        [tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2], tri[:, 1] - tri[:, 0]],
        axis=1,
    )
    t = e[:, 0] / np.linalg.norm(e[:, 0], axis=1, keepdims=True)
    fn = np.cross(e[:, 0], e[:, 1])
    fn /= np.linalg.norm(fn, axis=1, keepdims=True)
    b = np.cross(fn, t)

    # least squares for (a, c, d) of [[a, c], [c, d]] from three edge
    # constraints: II @ e_uv = dn_uv
    eu = np.einsum("fjk,fk->fj", e, t)
    ev = np.einsum("fjk,fk->fj", e, b)
    # normal difference across edge j (opposite corner j)
    dn = np.stack(
        [nrm[:, 2] - nrm[:, 1], nrm[:, 0] - nrm[:, 2], nrm[:, 1] - nrm[:, 0]],
        axis=1,
    )
    dnu = np.einsum("fjk,fk->fj", dn, t)
    dnv = np.einsum("fjk,fk->fj", dn, b)

    ata = np.zeros((len(faces), 3, 3))
    atb = np.zeros((len(faces), 3))
    for j in range(3):
        u, v = eu[:, j], ev[:, j]
        ata[:, 0, 0] += u * u
        ata[:, 0, 1] += u * v
        ata[:, 1, 1] += u * u + v * v
        ata[:, 1, 2] += u * v
        ata[:, 2, 2] += v * v
        atb[:, 0] += u * dnu[:, j]
        atb[:, 1] += v * dnu[:, j] + u * dnv[:, j]
        atb[:, 2] += v * dnv[:, j]
    ata[:, 1, 0] = ata[:, 0, 1]
    ata[:, 2, 1] = ata[:, 1, 2]
    ata[:, 0, 2] = 0.0
    ata[:, 2, 0] = 0.0
    try:
        sol = np.linalg.solve(ata, atb[..., None])[..., 0]
    except np.linalg.LinAlgError:
        sol = np.stack([np.linalg.lstsq(m, r, rcond=None)[0]
                        for m, r in zip(ata, atb)])

    corner_areas = _corner_areas(tri, mesh.face_areas)
    point_areas = np.zeros(len(verts))
    for j in range(3):
        np.add.at(point_areas, faces[:, j], corner_areas[:, j])

    u_axis = _perpendicular(normals)
    v_axis = np.cross(normals, u_axis)

    tensors = np.zeros((len(verts), 2, 2))
    for j in range(3):
        vid = faces[:, j]
        ru, rv = _rotate_frame_to_normal(u_axis[vid], v_axis[vid], fn)
        u1 = np.einsum("ij,ij->i", ru, t)
        v1 = np.einsum("ij,ij->i", ru, b)
        u2 = np.einsum("ij,ij->i", rv, t)
        v2 = np.einsum("ij,ij->i", rv, b)
        a, c, d = sol[:, 0], sol[:, 1], sol[:, 2]
        ku = a * u1 * u1 + 2.0 * c * u1 * v1 + d * v1 * v1
        kuv = a * u1 * u2 + c * (u1 * v2 + u2 * v1) + d * v1 * v2
        kv = a * u2 * u2 + 2.0 * c * u2 * v2 + d * v2 * v2
        with np.errstate(invalid="ignore", divide="ignore"):
            wt = np.where(
                point_areas[vid] > 0, corner_areas[:, j] / point_areas[vid], 0.0
            )
        np.add.at(tensors, (vid, 0, 0), wt * ku)
        np.add.at(tensors, (vid, 0, 1), wt * kuv)
        np.add.at(tensors, (vid, 1, 0), wt * kuv)
        np.add.at(tensors, (vid, 1, 1), wt * kv)

    isolated = point_areas == 0
    if np.any(isolated):
        warnings.warn(
            f"{int(isolated.sum())} vertices have no incident area; "
            "their curvature is set to zero",
            IsolatedVertexWarning,
        )

    ku, kuv, kv = tensors[:, 0, 0], tensors[:, 0, 1], tensors[:, 1, 1]
    mean = 0.5 * (ku + kv)
    disc = np.sqrt(np.maximum(0.25 * (ku - kv) ** 2 + kuv**2, 0.0))
    kappa1 = mean + disc
    kappa2 = mean - disc

    vmax = np.maximum(np.abs(kappa1), np.abs(kappa2))
    face_curvature = vmax[faces].mean(axis=1)
    frames = np.stack([u_axis, v_axis], axis=1)
    return CurvatureField(
        tensors=tensors,
        frames=frames,
        kappa1=kappa1,
        kappa2=kappa2,
        face_curvature=face_curvature,
    )
