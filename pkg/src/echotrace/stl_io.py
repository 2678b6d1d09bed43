"""STL reading and writing (ASCII and little-endian binary).

Loading returns an unwelded triangle soup; vertex merging, dedup and
orientation fixes live in :mod:`echotrace.mesh`.
"""

from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass

import numpy as np

from .errors import StlParseError

# one binary facet: normal (3f), three vertices (9f), attribute count (u2)
_BINARY_FACET = np.dtype(
    [
        ("normal", "<f4", (3,)),
        ("vertices", "<f4", (3, 3)),
        ("attr", "<u2"),
    ]
)

_VERTEX_RE = re.compile(
    rb"vertex\s+([^\s]+)\s+([^\s]+)\s+([^\s]+)", re.IGNORECASE
)


@dataclass
class RawMesh:
    """Triangle soup straight from a file or generator, prior to repair."""

    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray     # (m, 3) int64 indices into vertices
    source_format: str = "memory"

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must have shape (n, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must have shape (m, 3)")
        if self.faces.size and (
            self.faces.min() < 0 or self.faces.max() >= len(self.vertices)
        ):
            raise ValueError("face indices out of range")


def _looks_ascii(head: bytes) -> bool:
    if not head.lstrip().lower().startswith(b"solid"):
        return False
    # binary files may also start with "solid"; require a facet keyword
    return b"facet" in head.lower() or b"endsolid" in head.lower()


def load_stl(path) -> RawMesh:
    """Read an STL file, autodetecting ASCII versus binary layout."""
    with open(path, "rb") as fh:
        data = fh.read()
    if _looks_ascii(data[:1024]):
        return _parse_ascii(data)
    return _parse_binary(data)


def _parse_ascii(data: bytes) -> RawMesh:
    coords = _VERTEX_RE.findall(data)
    n_facets = len(re.findall(rb"facet\s+normal", data, re.IGNORECASE))
    if len(coords) == 0:
        raise StlParseError("ASCII STL contains no vertex lines")
    if len(coords) % 3 != 0:
        raise StlParseError(
            f"ASCII STL vertex count {len(coords)} is not a multiple of 3"
        )
    if n_facets != len(coords) // 3:
        raise StlParseError(
            f"ASCII STL has {n_facets} facets but {len(coords)} vertex lines"
        )
    try:
        vertices = np.asarray(coords, dtype=np.float64)
    except ValueError as exc:
        raise StlParseError(f"unparseable vertex coordinate: {exc}") from exc
    faces = np.arange(len(vertices), dtype=np.int64).reshape(-1, 3)
    return RawMesh(vertices, faces, source_format="stl_ascii")


def _parse_binary(data: bytes) -> RawMesh:
    if len(data) < 84:
        raise StlParseError(
            f"binary STL too short: {len(data)} bytes, header needs 84"
        )
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) != expected:
        raise StlParseError(
            f"binary STL declares {count} facets ({expected} bytes) "
            f"but file has {len(data)} bytes"
        )
    if count == 0:
        raise StlParseError("binary STL declares zero facets")
    facets = np.frombuffer(data, dtype=_BINARY_FACET, count=count, offset=84)
    vertices = facets["vertices"].reshape(-1, 3).astype(np.float64)
    faces = np.arange(len(vertices), dtype=np.int64).reshape(-1, 3)
    return RawMesh(vertices, faces, source_format="stl_binary")


def save_stl(path, vertices, faces, binary: bool = True, name: str = "mesh"):
    """Write a triangle mesh to STL.

    Facet normals are recomputed from the winding.  ASCII output uses
    repr-exact floats so a write/load round trip preserves float32-exact
    geometry; binary STL is float32 by definition.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    tris = vertices[faces]  # (m, 3, 3)
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    np.divide(normals, lengths, out=normals, where=lengths > 0)

    if binary:
        rec = np.zeros(len(faces), dtype=_BINARY_FACET)
        rec["normal"] = normals.astype(np.float32)
        rec["vertices"] = tris.astype(np.float32)
        with open(path, "wb") as fh:
            fh.write(struct.pack("<80sI", name.encode()[:80], len(faces)))
            fh.write(rec.tobytes())
        return

    lines = [f"solid {name}"]
    for nrm, tri in zip(normals, tris):
        lines.append(f"  facet normal {nrm[0]:.9e} {nrm[1]:.9e} {nrm[2]:.9e}")
        lines.append("    outer loop")
        for v in tri:
            lines.append(
                "      vertex "
                f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}"
            )
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}\n")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def mesh_summary(path) -> dict:
    """Basic file facts without repairing: facet count, bounds, format."""
    raw = load_stl(path)
    return {
        "path": os.fspath(path),
        "format": raw.source_format,
        "n_facets": int(len(raw.faces)),
        "bounds_min": raw.vertices.min(axis=0).tolist(),
        "bounds_max": raw.vertices.max(axis=0).tolist(),
    }
