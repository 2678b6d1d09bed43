"""Analytic test meshes: plates, boxes, icospheres, cylinders.

All generators return ``(vertices, faces)`` with float64 vertices in metres
and int64 vertex indices.  Faces are wound counter-clockwise when viewed
from the outward side.  The meshes are built with shared vertices where the
surface is smooth, so curvature estimation sees a connected surface.
"""

from __future__ import annotations

import numpy as np


def plate(width: float, height: float, nx: int = 1, ny: int = 1):
    """Rectangular plate in the yz plane, centred on the origin.

    The outward normal is +x.  ``nx`` and ``ny`` subdivide the plate into a
    grid of quads, each split into two triangles.
    """
    if width <= 0 or height <= 0:
        raise ValueError("plate dimensions must be positive")
    ys = np.linspace(-width / 2.0, width / 2.0, nx + 1)
    zs = np.linspace(-height / 2.0, height / 2.0, ny + 1)
    yy, zz = np.meshgrid(ys, zs, indexing="ij")
    vertices = np.column_stack(
        [np.zeros(yy.size), yy.ravel(), zz.ravel()]
    ).astype(np.float64)

    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            # +x normal requires counter-clockwise order seen from +x
            faces.append([a, b, b + 1])
            faces.append([a, b + 1, a + 1])
    return vertices, np.asarray(faces, dtype=np.int64)


def box(size=1.0, n: int = 1):
    """Axis-aligned box centred on the origin with outward normals.

    ``size`` may be a scalar or a 3-vector of edge lengths.  Each face is an
    ``n`` by ``n`` grid of quads.  Vertices along shared edges are emitted
    once per face; run the mesh through repair to weld them.
    """
    size = np.broadcast_to(np.asarray(size, dtype=np.float64), (3,))
    if np.any(size <= 0):
        raise ValueError("box dimensions must be positive")
    half = size / 2.0

    all_v = []
    all_f = []
    # axis, sign pairs for the six faces
    for axis in range(3):
        u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3
        for sign in (1.0, -1.0):
            us = np.linspace(-half[u_axis], half[u_axis], n + 1)
            vs = np.linspace(-half[v_axis], half[v_axis], n + 1)
            uu, vv = np.meshgrid(us, vs, indexing="ij")
            verts = np.zeros((uu.size, 3))
            verts[:, axis] = sign * half[axis]
            verts[:, u_axis] = uu.ravel()
            verts[:, v_axis] = vv.ravel()
            base = sum(v.shape[0] for v in all_v)
            for i in range(n):
                for j in range(n):
                    a = base + i * (n + 1) + j
                    b = base + (i + 1) * (n + 1) + j
                    if sign > 0:
                        all_f.append([a, b, b + 1])
                        all_f.append([a, b + 1, a + 1])
                    else:
                        all_f.append([a, b + 1, b])
                        all_f.append([a, a + 1, b + 1])
            all_v.append(verts)
    return np.vstack(all_v), np.asarray(all_f, dtype=np.int64)


def icosphere(radius: float = 1.0, subdivisions: int = 3):
    """Geodesic sphere from a subdivided icosahedron.

    Every subdivision level quadruples the face count (20 * 4**s faces).
    Vertices are projected back onto the sphere after each split, so all
    lie exactly at ``radius`` from the origin.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")

    phi = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    vertices /= np.linalg.norm(vertices[0])
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )

    for _ in range(subdivisions):
        edges = np.concatenate(
            [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]
        )
        edges = np.sort(edges, axis=1)
        uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
        midpoints = vertices[uniq[:, 0]] + vertices[uniq[:, 1]]
        midpoints /= np.linalg.norm(midpoints, axis=1, keepdims=True)
        mid_idx = len(vertices) + np.arange(len(uniq))
        vertices = np.vstack([vertices, midpoints])

        n = len(faces)
        m01 = mid_idx[inverse[:n]]
        m12 = mid_idx[inverse[n:2 * n]]
        m20 = mid_idx[inverse[2 * n:]]
        faces = np.concatenate(
            [
                np.column_stack([faces[:, 0], m01, m20]),
                np.column_stack([faces[:, 1], m12, m01]),
                np.column_stack([faces[:, 2], m20, m12]),
                np.column_stack([m01, m12, m20]),
            ]
        )
    return vertices * radius, faces


def cylinder(radius: float, height: float, n_theta: int = 48, n_z: int = 8):
    """Open cylindrical tube along the z axis, centred on the origin.

    No caps: the curvature along z is exactly zero, which makes the tube a
    clean reference for anisotropic curvature (1/radius across, 0 along).
    """
    if radius <= 0 or height <= 0:
        raise ValueError("cylinder dimensions must be positive")
    if n_theta < 3:
        raise ValueError("n_theta must be >= 3")
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    zs = np.linspace(-height / 2.0, height / 2.0, n_z + 1)

    ring = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    vertices = np.zeros(((n_z + 1) * n_theta, 3))
    for k, z in enumerate(zs):
        vertices[k * n_theta:(k + 1) * n_theta, :2] = ring
        vertices[k * n_theta:(k + 1) * n_theta, 2] = z

    faces = []
    for k in range(n_z):
        for i in range(n_theta):
            a = k * n_theta + i
            b = k * n_theta + (i + 1) % n_theta
            c = a + n_theta
            d = b + n_theta
            faces.append([a, b, d])
            faces.append([a, d, c])
    return vertices, np.asarray(faces, dtype=np.int64)
