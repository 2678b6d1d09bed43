"""Scene plumbing: rigid poses, the emitter/receiver array, global
simulation parameters and direction sets for scans.

Conventions: +x is the sensor boresight, metres and seconds throughout,
rotations are extrinsic about the world axes applied in x, y, z order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


@dataclass(frozen=True)
class Pose:
    """Rigid placement: rotate about x, then y, then z, then translate."""

    translation: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (0.0, 0.0, 0.0)  # radians, applied x, y, z

    @property
    def matrix(self) -> np.ndarray:
        rx, ry, rz = self.rotation
        m = np.eye(4)
        m[:3, :3] = rotation_z(rz) @ rotation_y(ry) @ rotation_x(rx)
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "PoseLike") -> np.ndarray:
        """Matrix applying ``other`` first, then this pose."""
        return self.matrix @ _as_matrix(other)


PoseLike = "Pose | np.ndarray"


def _as_matrix(pose) -> np.ndarray:
    if isinstance(pose, Pose):
        return pose.matrix
    m = np.asarray(pose, dtype=np.float64)
    if m.shape != (4, 4):
        raise ValueError("pose must be a Pose or a 4x4 matrix")
    return m


def make_pose(translation=(0.0, 0.0, 0.0), rotation_deg=(0.0, 0.0, 0.0)) -> Pose:
    """Pose from a translation and per-axis rotation angles in degrees."""
    return Pose(
        translation=tuple(float(t) for t in translation),
        rotation=tuple(float(np.deg2rad(a)) for a in rotation_deg),
    )


@dataclass
class SensorArray:
    """One emitter and I receivers, positions in the sensor frame."""

    emitter: np.ndarray                   # (3,)
    receivers: np.ndarray                 # (i, 3)
    groups: dict = field(default_factory=dict)  # name -> receiver indices

    def __post_init__(self):
        self.emitter = np.asarray(self.emitter, dtype=np.float64).reshape(3)
        self.receivers = np.atleast_2d(
            np.asarray(self.receivers, dtype=np.float64)
        )
        if self.receivers.shape[1] != 3 or len(self.receivers) == 0:
            raise ValueError("receivers must have shape (i, 3) with i >= 1")
        if not (
            np.all(np.isfinite(self.emitter))
            and np.all(np.isfinite(self.receivers))
        ):
            raise ValueError("sensor positions must be finite")
        for name, idx in self.groups.items():
            idx = np.asarray(idx, dtype=np.int64)
            if idx.min(initial=0) < 0 or idx.max(initial=-1) >= len(self.receivers):
                raise ValueError(f"group {name!r} indexes unknown receivers")
            self.groups[name] = idx

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)


def transform_sensor(array: SensorArray, pose) -> tuple:
    """World-frame (emitter, receivers) under the sensor pose."""
    m = _as_matrix(pose)
    emitter = m[:3, :3] @ array.emitter + m[:3, 3]
    receivers = array.receivers @ m[:3, :3].T + m[:3, 3]
    return emitter, receivers


@dataclass
class SimParams:
    """Global knobs: medium, sampling, ray and sampling budgets, mixing."""

    speed_of_sound: float = 343.0
    sample_rate: float = 1_000_000.0
    ir_length: int = 8192          # power of two
    n_rays: int = 100_000
    max_bounces: int = 3
    n_diffraction: int = 10_000
    specular_gain: float = 1.0     # weight of the specular channel
    diffraction_gain: float = 1.0  # weight of the diffraction channel
    seed: int = 0
    band: tuple | None = None      # (lo, hi) Hz; None keeps the full grid
    band_transition: float = 5000.0
    band_edges: bool = True        # raised-cosine edges inside the band
    curvature_quantile: float = 0.75   # sets the diffraction threshold
    curvature_threshold: float | None = None  # absolute override, 1/m
    ray_jitter: bool = True
    normalize_rays: bool = False   # scale the specular channel by 1/n_rays

    def __post_init__(self):
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        n = self.ir_length
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError("ir_length must be a power of two >= 2")
        if self.n_rays < 1:
            raise ValueError("n_rays must be >= 1")
        if self.max_bounces < 1:
            raise ValueError("max_bounces must be >= 1")
        if self.n_diffraction < 0:
            raise ValueError("n_diffraction must be >= 0")
        if self.band is not None:
            lo, hi = self.band
            if not (0 <= lo < hi <= self.sample_rate / 2):
                raise ValueError(
                    f"band {self.band} must satisfy 0 <= lo < hi <= fs/2"
                )
        if not (0.0 <= self.curvature_quantile <= 1.0):
            raise ValueError("curvature_quantile must be in [0, 1]")

    @property
    def frequencies(self) -> np.ndarray:
        """One-sided grid j * fs / n for j = 0 .. n/2."""
        return (
            np.arange(self.ir_length // 2 + 1, dtype=np.float64)
            * self.sample_rate / self.ir_length
        )

    @property
    def max_path_length(self) -> float:
        """Paths at or beyond ir_length/fs * c alias and are dropped."""
        return self.ir_length / self.sample_rate * self.speed_of_sound


def partition_sphere_directions(n: int, hemisphere: bool = False) -> np.ndarray:
    """About-equal-area unit directions, deterministic.

    A golden-angle spiral on the sphere (or on the +x half when
    ``hemisphere``).  Neighbour spacing is uniform to well under 50%
    relative spread.  ``n == 1`` returns the boresight.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.array([[1.0, 0.0, 0.0]])
    i = np.arange(n, dtype=np.float64)
    u = (i + 0.5) / n
    x = 1.0 - u if hemisphere else 1.0 - 2.0 * u
    r = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = golden * i
    return np.column_stack([x, r * np.cos(phi), r * np.sin(phi)])
