"""File-format tests built against hand-constructed byte layouts."""

import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from echotrace.errors import StlParseError
from echotrace.stl_io import RawMesh, load_stl, mesh_summary, save_stl

TRI = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def _binary_blob(triangles, header=b"\0" * 80, count=None):
    """Pack triangles into the 80-byte-header binary layout by hand."""
    triangles = np.asarray(triangles, dtype=np.float32)
    n = len(triangles) if count is None else count
    out = [header[:80].ljust(80, b"\0"), struct.pack("<I", n)]
    for tri in triangles:
        normal = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        normal = normal / np.linalg.norm(normal)
        out.append(struct.pack("<3f", *normal))
        for v in tri:
            out.append(struct.pack("<3f", *v))
        out.append(struct.pack("<H", 0))
    return b"".join(out)


def test_hand_built_binary_single_triangle(tmp_path):
    path = tmp_path / "tri.stl"
    path.write_bytes(_binary_blob([TRI]))
    raw = load_stl(path)
    assert raw.source_format == "stl_binary"
    assert_array_equal(raw.faces, [[0, 1, 2]])
    assert_array_equal(raw.vertices, TRI)


def test_hand_written_ascii(tmp_path):
    text = """solid demo
  FACET NORMAL 0 0 1
    outer loop
      Vertex 0.0 0.0 0.0
      vertex 1.0e0 0 0
      vertex 0 1 0
    endloop
  endfacet
endsolid demo
"""
    path = tmp_path / "tri_ascii.stl"
    path.write_text(text)
    raw = load_stl(path)
    assert raw.source_format == "stl_ascii"
    assert_array_equal(raw.vertices, TRI)


def test_binary_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    verts = rng.normal(size=(30, 3)).astype(np.float32).astype(np.float64)
    faces = np.arange(30).reshape(-1, 3)
    path = tmp_path / "rt.stl"
    save_stl(path, verts, faces, binary=True)
    raw = load_stl(path)
    assert_array_equal(raw.vertices, verts)
    assert_array_equal(raw.faces, faces)


def test_ascii_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    verts = rng.normal(size=(9, 3))  # full float64 precision
    faces = np.arange(9).reshape(-1, 3)
    path = tmp_path / "rt_ascii.stl"
    save_stl(path, verts, faces, binary=False)
    raw = load_stl(path)
    assert raw.source_format == "stl_ascii"
    assert_array_equal(raw.vertices, verts)


def test_binary_file_with_solid_header(tmp_path):
    # binary files are allowed to start with the ASCII keyword
    path = tmp_path / "trap.stl"
    path.write_bytes(_binary_blob([TRI], header=b"solid binary export"))
    raw = load_stl(path)
    assert raw.source_format == "stl_binary"
    assert len(raw.faces) == 1


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.stl"
    path.write_bytes(b"")
    with pytest.raises(StlParseError):
        load_stl(path)


def test_truncated_binary_rejected(tmp_path):
    blob = _binary_blob([TRI])
    path = tmp_path / "short.stl"
    path.write_bytes(blob[:-10])
    with pytest.raises(StlParseError):
        load_stl(path)


def test_binary_count_mismatch_rejected(tmp_path):
    path = tmp_path / "count.stl"
    path.write_bytes(_binary_blob([TRI], count=3))
    with pytest.raises(StlParseError):
        load_stl(path)


def test_zero_facet_binary_rejected(tmp_path):
    path = tmp_path / "none.stl"
    path.write_bytes(b"\0" * 80 + struct.pack("<I", 0))
    with pytest.raises(StlParseError):
        load_stl(path)


def test_ascii_bad_vertex_count_rejected(tmp_path):
    text = "solid x\nfacet normal 0 0 1\nvertex 0 0 0\nvertex 1 0 0\nendfacet\nendsolid x\n"
    path = tmp_path / "bad.stl"
    path.write_text(text)
    with pytest.raises(StlParseError):
        load_stl(path)


def test_ascii_unparseable_coordinate_rejected(tmp_path):
    text = """solid x
facet normal 0 0 1
vertex 0 0 zero
vertex 1 0 0
vertex 0 1 0
endfacet
endsolid x
"""
    path = tmp_path / "nan.stl"
    path.write_text(text)
    with pytest.raises(StlParseError):
        load_stl(path)


def test_mesh_summary(tmp_path):
    verts = np.array(
        [[0, 0, 0], [2, 0, 0], [0, 3, 0], [0, 0, 0], [2, 0, 0], [0, 0, -1]],
        dtype=np.float64,
    )
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    path = tmp_path / "two.stl"
    save_stl(path, verts, faces)
    info = mesh_summary(path)
    assert info["n_facets"] == 2
    assert info["format"] == "stl_binary"
    assert info["bounds_min"] == [0.0, 0.0, -1.0]
    assert info["bounds_max"] == [2.0, 3.0, 0.0]


def test_raw_mesh_validation():
    with pytest.raises(ValueError):
        RawMesh(np.zeros((3, 2)), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        RawMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))  # index out of range
    with pytest.raises(ValueError):
        RawMesh(np.zeros((3, 3)), np.array([[-1, 0, 1]]))
