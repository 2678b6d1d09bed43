"""Monte-Carlo diffraction from strongly curved regions.

Faces whose curvature summary exceeds a threshold act as secondary
sources.  Points are drawn with probability proportional to
(curvature - threshold) * area, re-radiate the emitter's field through the
same curvature-derived lobe (about the mirror direction), and are summed
with a 1/M weight so the channel's expected energy does not depend on the
sample budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvature import CurvatureField
from .errors import NoDiffractionCandidatesError
from .mesh import Mesh
from .raytrace import ContributionBatch, reflect, segments_blocked


@dataclass
class DiffractionDistribution:
    """Discrete face-sampling distribution over candidate faces."""

    faces: np.ndarray    # (k,) candidate face indices
    weights: np.ndarray  # (k,) unnormalised sampling weights
    cdf: np.ndarray      # (k,) inclusive cumulative, ends at 1
    threshold: float

    def __len__(self):
        return len(self.faces)

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()


def build_sampling_distribution(
    mesh: Mesh,
    curvature: CurvatureField,
    threshold: float | None = None,
    quantile: float = 0.75,
) -> DiffractionDistribution:
    """Candidate faces and their sampling weights.

    ``threshold`` is an absolute curvature in 1/m; when omitted it adapts
    to the scene as the given quantile of the per-face curvature.  Raises
    when nothing clears the threshold (a flat scene has no diffracting
    edges).
    """
    cm = curvature.face_curvature
    if len(cm) != mesh.n_faces:
        raise ValueError("curvature field does not match the mesh")
    if threshold is None:
        threshold = float(np.quantile(cm, quantile))
    weights = np.maximum(cm - threshold, 0.0) * mesh.face_areas
    faces = np.flatnonzero(weights > 0)
    if len(faces) == 0:
        raise NoDiffractionCandidatesError(
            f"no face curvature exceeds threshold {threshold:.6g}"
        )
    w = weights[faces]
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    return DiffractionDistribution(
        faces=faces, weights=w, cdf=cdf, threshold=float(threshold)
    )


def sample_diffraction_points(
    dist: DiffractionDistribution,
    mesh: Mesh,
    m: int,
    rng: np.random.Generator,
):
    """Draw ``m`` surface points: faces by weight, positions uniform.

    Returns ``(face_indices, points)``.  Uniformity within a face comes
    from folding the unit-square barycentric trick.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    pick = np.searchsorted(dist.cdf, rng.random(m), side="left")
    face_idx = dist.faces[pick]
    u = rng.random(m)
    v = rng.random(m)
    over = u + v > 1.0
    u[over] = 1.0 - u[over]
    v[over] = 1.0 - v[over]
    tri = mesh.vertices[mesh.faces[face_idx]]
    points = (
        tri[:, 0]
        + u[:, None] * (tri[:, 1] - tri[:, 0])
        + v[:, None] * (tri[:, 2] - tri[:, 0])
    )
    return face_idx, points


def evaluate_diffraction(
    face_idx: np.ndarray,
    points: np.ndarray,
    emitter: np.ndarray,
    receivers: np.ndarray,
    mesh: Mesh,
    occlusion: bool = True,
) -> ContributionBatch:
    """Contributions of sampled points towards every receiver.

    Each point mirrors the emitter direction about its face normal and
    radiates through the face's scattering lobe; rows carry a 1/M weight.
    Points hidden from the emitter, or legs hidden from a receiver, get
    zero amplitude.
    """
    points = np.atleast_2d(points)
    receivers = np.atleast_2d(np.asarray(receivers, dtype=np.float64))
    emitter = np.asarray(emitter, dtype=np.float64).reshape(3)
    m, n_recv = len(points), len(receivers)

    inc = points - emitter[None, :]
    r_in = np.linalg.norm(inc, axis=1)
    inc_unit = inc / r_in[:, None]
    axis = reflect(inc_unit, mesh.geometric_normals[face_idx])

    to_recv = receivers[None, :, :] - points[:, None, :]
    dist = np.linalg.norm(to_recv, axis=2)
    cosang = np.einsum("mik,mk->mi", to_recv, axis) / dist
    theta = np.arccos(np.clip(cosang, -1.0, 1.0))

    amplitude = np.full((m, n_recv), 1.0 / m)
    if occlusion:
        from_emitter = segments_blocked(
            np.broadcast_to(emitter, points.shape), points, mesh
        )
        amplitude[from_emitter] = 0.0
        starts = np.repeat(points, n_recv, axis=0)
        ends = np.tile(receivers, (m, 1))
        blocked = segments_blocked(starts, ends, mesh).reshape(m, n_recv)
        amplitude[blocked] = 0.0

    return ContributionBatch(
        provenance="diffraction",
        receiver_idx=np.tile(np.arange(n_recv, dtype=np.int64), m),
        path_length=(r_in[:, None] + dist).ravel(),
        lobe_angle=theta.ravel(),
        chain_faces=np.repeat(face_idx, n_recv).reshape(-1, 1).astype(np.int64),
        terminal_face=np.repeat(face_idx, n_recv).astype(np.int64),
        amplitude=amplitude.ravel(),
    )
