"""Mesh repair and the cleaned-mesh container used by the tracer.

Repair welds duplicate vertices, removes degenerate and duplicate faces,
makes windings consistent per connected component and flips components so
normals point outward.  The result carries both geometric face normals
(from the winding) and smoothed ones (averaged from vertex normals).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMeshError, OrientationWarning
from .stl_io import RawMesh


@dataclass
class Mesh:
    """Repaired triangle mesh with precomputed normals and areas."""

    vertices: np.ndarray        # (v, 3)
    faces: np.ndarray           # (f, 3)
    vertex_normals: np.ndarray  # (v, 3) unit, area-weighted average
    face_normals: np.ndarray    # (f, 3) unit, mean of the corner vertex normals
    geometric_normals: np.ndarray  # (f, 3) unit, from the winding
    face_areas: np.ndarray      # (f,)
    _aabb: tuple = field(init=False, repr=False)

    def __post_init__(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        self._aabb = (lo, hi)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def aabb(self):
        """Axis-aligned bounds as (min, max) corner vectors."""
        return self._aabb

    @property
    def face_centers(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]


def transform_points(points: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Apply a 4x4 homogeneous transform to an (n, 3) point array."""
    points = np.asarray(points, dtype=np.float64)
    return points @ matrix[:3, :3].T + matrix[:3, 3]


def transform_raw(raw: RawMesh, matrix: np.ndarray, scale: float = 1.0) -> RawMesh:
    """Scale about the origin, then pose.  Returns a new RawMesh."""
    verts = raw.vertices * float(scale)
    return RawMesh(transform_points(verts, matrix), raw.faces, raw.source_format)


def _first_occurrence_groups(keys: np.ndarray):
    """Group rows of ``keys``; map each row to the index of the first row of
    its group, numbered in order of first appearance."""
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    n_groups = inverse.max() + 1 if len(inverse) else 0
    first = np.full(n_groups, len(keys), dtype=np.int64)
    np.minimum.at(first, inverse, np.arange(len(keys), dtype=np.int64))
    # renumber groups by first appearance so output order is input order
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(n_groups)
    return rank[inverse], first[order]


def repair_mesh(raw: RawMesh, merge_tolerance: float = 1e-6) -> Mesh:
    """Clean a triangle soup into a simulation-ready mesh.

    Steps: weld vertices within ``merge_tolerance`` (grid quantisation,
    keeping the first-seen coordinates), drop faces that collapse or repeat,
    orient windings consistently within each connected component, flip
    components whose normals face inward, then compute area-weighted vertex
    normals and averaged face normals.  Running repair on an already
    repaired mesh is a no-op.
    """
    if merge_tolerance <= 0:
        raise ValueError("merge_tolerance must be positive")
    if len(raw.faces) == 0:
        raise EmptyMeshError("mesh has no faces")

    keys = np.round(raw.vertices / merge_tolerance).astype(np.int64)
    vert_map, first_idx = _first_occurrence_groups(keys)
    vertices = raw.vertices[first_idx]
    faces = vert_map[raw.faces]

    # degenerate: repeated vertex index or numerically zero area
    distinct = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 2] != faces[:, 0])
    )
    faces = faces[distinct]
    if len(faces):
        tri = vertices[faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        faces = faces[np.linalg.norm(cross, axis=1) > 1e-14]

    # duplicate faces: same vertex set regardless of winding, keep first
    if len(faces):
        _, first_face = _first_occurrence_groups(np.sort(faces, axis=1))
        faces = faces[first_face]
    if len(faces) == 0:
        raise EmptyMeshError("all faces degenerate after vertex merge")

    faces = _orient_consistently(vertices, faces)

    # drop vertices no face references and remap
    used = np.zeros(len(vertices), dtype=bool)
    used[faces] = True
    remap = np.cumsum(used) - 1
    vertices = vertices[used]
    faces = remap[faces]

    tri = vertices[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    cross_norm = np.linalg.norm(cross, axis=1)
    geometric = cross / cross_norm[:, None]
    areas = cross_norm / 2.0

    # area-weighted vertex normals: the cross product already carries area
    vnorm = np.zeros_like(vertices)
    for c in range(3):
        np.add.at(vnorm, faces[:, c], cross)
    lengths = np.linalg.norm(vnorm, axis=1, keepdims=True)
    np.divide(vnorm, lengths, out=vnorm, where=lengths > 0)

    favg = vnorm[faces].mean(axis=1)
    flen = np.linalg.norm(favg, axis=1, keepdims=True)
    np.divide(favg, flen, out=favg, where=flen > 0)
    # a face whose vertex normals cancel exactly falls back to geometry
    favg[flen.ravel() == 0] = geometric[flen.ravel() == 0]

    return Mesh(
        vertices=vertices,
        faces=faces,
        vertex_normals=vnorm,
        face_normals=favg,
        geometric_normals=geometric,
        face_areas=areas,
    )


def _orient_consistently(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Flood-fill windings across shared edges, then point each connected
    component outward (positive signed volume about its own centroid)."""
    n_faces = len(faces)
    edge_faces: dict = {}
    for fi in range(n_faces):
        f = faces[fi]
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (a, b) if a < b else (b, a)
            edge_faces.setdefault(key, []).append((fi, a < b))

    flipped = np.zeros(n_faces, dtype=bool)
    visited = np.zeros(n_faces, dtype=bool)
    component = np.full(n_faces, -1, dtype=np.int64)
    conflicts = 0
    n_components = 0

    for seed in range(n_faces):
        if visited[seed]:
            continue
        comp_id = n_components
        n_components += 1
        stack = [seed]
        visited[seed] = True
        component[seed] = comp_id
        while stack:
            fi = stack.pop()
            f = faces[fi]
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (a, b) if a < b else (b, a)
                owners = edge_faces[key]
                if len(owners) != 2:
                    continue  # boundary or non-manifold: do not propagate
                for fj, fwd_j in owners:
                    if fj == fi:
                        continue
                    # consistent winding traverses a shared edge in
                    # opposite directions
                    eff_i = (a < b) != flipped[fi]
                    want_flip = fwd_j != (not eff_i)
                    if not visited[fj]:
                        visited[fj] = True
                        component[fj] = comp_id
                        flipped[fj] = want_flip
                        stack.append(fj)
                    elif flipped[fj] != want_flip:
                        conflicts += 1

    if conflicts:
        warnings.warn(
            f"{conflicts} winding conflicts: surface is not orientable, "
            "kept best-effort orientation",
            OrientationWarning,
        )

    faces = faces.copy()
    faces[flipped] = faces[flipped][:, ::-1]

    # outward check per component via signed divergence about the centroid
    tri = vertices[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    centers = tri.mean(axis=1)
    for comp_id in range(n_components):
        sel = component == comp_id
        centroid = centers[sel].mean(axis=0)
        signed = np.einsum("ij,ij->i", centers[sel] - centroid, cross[sel]).sum()
        if signed < 0:
            faces[sel] = faces[sel][:, ::-1]
    return faces
