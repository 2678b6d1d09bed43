"""Poses, sensor arrays, simulation parameters, direction partitions."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from echotrace.scene import (
    Pose,
    SensorArray,
    SimParams,
    make_pose,
    partition_sphere_directions,
    rotation_x,
    rotation_y,
    rotation_z,
    transform_sensor,
)


def test_rotation_matrices_are_special_orthogonal():
    rng = np.random.default_rng(0)
    for make in (rotation_x, rotation_y, rotation_z):
        for ang in rng.uniform(-np.pi, np.pi, size=5):
            r = make(ang)
            assert_allclose(r @ r.T, np.eye(3), atol=1e-15)
            assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-15)


def test_rotation_axis_mapping():
    assert_allclose(rotation_z(np.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    assert_allclose(rotation_x(np.pi / 2) @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    assert_allclose(rotation_y(np.pi / 2) @ [0, 0, 1], [1, 0, 0], atol=1e-15)


def test_pose_matrix_is_rigid():
    pose = make_pose((1.0, -2.0, 0.5), (10.0, 20.0, 30.0))
    m = pose.matrix
    r = m[:3, :3]
    assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)
    assert_allclose(m[:3, 3], [1.0, -2.0, 0.5], atol=0)
    assert_allclose(m[3], [0, 0, 0, 1], atol=0)


def test_pose_rotation_order_x_then_y_then_z():
    pose = Pose(rotation=(0.1, 0.2, 0.3))
    expect = rotation_z(0.3) @ rotation_y(0.2) @ rotation_x(0.1)
    assert_allclose(pose.matrix[:3, :3], expect, atol=0)


def test_pose_compose_applies_other_first():
    a = make_pose((1.0, 0.0, 0.0), (0.0, 0.0, 90.0))
    b = make_pose((0.0, 2.0, 0.0))
    m = a.compose(b)
    # point at origin: b moves it to (0,2,0), a rotates to (-2,0,0) + (1,0,0)
    p = m @ np.array([0.0, 0.0, 0.0, 1.0])
    assert_allclose(p[:3], [-1.0, 0.0, 0.0], atol=1e-12)
    # raw 4x4 matrices are accepted interchangeably
    assert_allclose(a.compose(b.matrix), m, atol=0)


def test_transform_sensor_is_isometric():
    array = SensorArray(
        emitter=[0.0, 0.0, 0.0],
        receivers=[[0.0, 0.01, 0.0], [0.0, -0.01, 0.0], [0.0, 0.0, 0.02]],
    )
    pose = make_pose((0.4, 0.5, -0.1), (33.0, -12.0, 140.0))
    emitter, receivers = transform_sensor(array, pose)
    d0 = np.linalg.norm(array.receivers - array.emitter, axis=1)
    d1 = np.linalg.norm(receivers - emitter, axis=1)
    assert_allclose(d1, d0, atol=1e-12)
    r0 = np.linalg.norm(array.receivers[0] - array.receivers[2])
    r1 = np.linalg.norm(receivers[0] - receivers[2])
    assert r1 == pytest.approx(r0, abs=1e-12)


def test_sensor_array_validation():
    with pytest.raises(ValueError):
        SensorArray(emitter=np.zeros(3), receivers=np.zeros((0, 3)))
    with pytest.raises(ValueError):
        SensorArray(emitter=np.zeros(3), receivers=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        SensorArray(emitter=[np.nan, 0, 0], receivers=np.zeros((1, 3)))
    with pytest.raises(ValueError):
        SensorArray(emitter=np.zeros(3), receivers=np.zeros((2, 3)),
                    groups={"left": [0, 5]})
    array = SensorArray(emitter=np.zeros(3), receivers=np.zeros((2, 3)),
                        groups={"left": [0], "right": [1]})
    assert array.n_receivers == 2


def test_sim_params_validation():
    with pytest.raises(ValueError):
        SimParams(ir_length=1000)       # not a power of two
    with pytest.raises(ValueError):
        SimParams(n_rays=0)
    with pytest.raises(ValueError):
        SimParams(max_bounces=0)
    with pytest.raises(ValueError):
        SimParams(n_diffraction=-1)
    with pytest.raises(ValueError):
        SimParams(band=(40_000.0, 30_000.0))
    with pytest.raises(ValueError):
        SimParams(sample_rate=100_000.0, band=(10_000.0, 60_000.0))
    with pytest.raises(ValueError):
        SimParams(curvature_quantile=1.5)


def test_sim_params_frequency_grid():
    params = SimParams(sample_rate=1_000_000.0, ir_length=8192)
    f = params.frequencies
    assert len(f) == 4097
    assert f[0] == 0.0
    assert f[-1] == 500_000.0
    assert_allclose(np.diff(f), 1_000_000.0 / 8192, atol=0)
    assert params.max_path_length == pytest.approx(8192 / 1e6 * 343.0)


def test_partition_directions_unit_and_counted():
    for n in (1, 2, 17, 500):
        for hemisphere in (False, True):
            d = partition_sphere_directions(n, hemisphere=hemisphere)
            assert d.shape == (n, 3)
            assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
            if hemisphere:
                assert d[:, 0].min() > 0.0
    assert_allclose(partition_sphere_directions(1), [[1.0, 0.0, 0.0]])


def test_partition_directions_equal_area_bands():
    # the x-coordinate is stratified, so equal-width x bands get equal counts
    n = 600
    d = partition_sphere_directions(n)
    counts, _ = np.histogram(d[:, 0], bins=10, range=(-1.0, 1.0))
    assert counts.min() == counts.max() == n // 10

    dh = partition_sphere_directions(n, hemisphere=True)
    counts, _ = np.histogram(dh[:, 0], bins=10, range=(0.0, 1.0))
    assert counts.min() == counts.max() == n // 10


def test_partition_directions_spread():
    # neighbour spacing stays within 50% of the equal-area scale
    n = 256
    d = partition_sphere_directions(n)
    dots = np.clip(d @ d.T, -1.0, 1.0)
    np.fill_diagonal(dots, -1.0)
    nearest = np.arccos(dots.max(axis=1))
    scale = np.sqrt(4.0 * np.pi / n)
    assert nearest.min() > 0.5 * scale
    assert nearest.max() < 1.5 * scale


def test_partition_rejects_bad_count():
    with pytest.raises(ValueError):
        partition_sphere_directions(0)
