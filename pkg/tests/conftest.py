"""Shared geometry and configuration helpers for the test suite."""

import numpy as np
import pytest

from echotrace.config import (
    CallSpec,
    EarSpec,
    MeshSpec,
    OutputSpec,
    SimulationConfig,
)
from echotrace.mesh import repair_mesh
from echotrace.primitives import icosphere, plate
from echotrace.scene import Pose, SensorArray, SimParams, make_pose
from echotrace.stl_io import RawMesh, save_stl


def build_mesh(vertices, faces, merge_tolerance=1e-6):
    return repair_mesh(RawMesh(vertices, faces), merge_tolerance)


@pytest.fixture
def plate_mesh():
    return build_mesh(*plate(1.0, 1.0, 4, 4))


@pytest.fixture
def sphere_mesh():
    return build_mesh(*icosphere(0.1, 3))


def fast_params(**overrides):
    """Small, narrowband parameters that keep end-to-end tests quick."""
    base = dict(
        sample_rate=160_000.0,
        ir_length=1024,
        n_rays=2000,
        max_bounces=2,
        n_diffraction=300,
        band=(35_000.0, 75_000.0),
        curvature_threshold=0.0,
        seed=3,
    )
    base.update(overrides)
    return SimParams(**base)


def fast_call(**overrides):
    base = dict(kind="linear", f_start=70_000.0, f_end=40_000.0,
                duration=0.001)
    base.update(overrides)
    return CallSpec(**base)


def small_config(tmp_path, mesh_file="target.stl", radius=0.05,
                 subdivisions=1, distance=1.0, receivers=None,
                 ears=None, params=None, **config_overrides):
    """End-to-end config around a small sphere; everything overridable."""
    path = tmp_path / mesh_file
    if not path.exists():
        verts, faces = icosphere(radius, subdivisions)
        save_stl(path, verts, faces)
    if receivers is None:
        receivers = [[0.0, 0.0, 0.0], [0.0, 0.01, 0.0]]
    if ears is None:
        ears = {"mono": EarSpec(kind="impulse")}
    kwargs = dict(
        mesh=MeshSpec(path=str(path),
                      pose=make_pose((distance, 0.0, 0.0))),
        sensor=SensorArray(emitter=np.zeros(3), receivers=receivers),
        sensor_pose=Pose(),
        params=params if params is not None else fast_params(),
        call=fast_call(),
        ears=ears,
        output=OutputSpec(directory=str(tmp_path / "out")),
        base_dir=str(tmp_path),
    )
    kwargs.update(config_overrides)
    return SimulationConfig(**kwargs)
