"""Frequency-dependent reflection model derived from surface curvature.

Each face gets, per frequency, a Gaussian scattering lobe around the mirror
direction and a reflection strength.  Curvature is compared against the
acoustic wavenumber: strongly curved faces (relative to the wavelength)
scatter wide and weak, flat faces reflect narrow and strong.

The mapping is separable in face and frequency, so the field stores only
the per-face curvature and evaluates lobe parameters lazily for whatever
(face, frequency) subset the tracer needs.  Materialising the full matrix
for a large mesh on a fine grid would waste hundreds of megabytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvature import CurvatureField
from .errors import InvalidMaterialError

LN2 = float(np.log(2.0))


@dataclass
class MaterialParams:
    """Bounds and scaling for the curvature-to-reflection mapping.

    Angles are radians.  ``lobe_min``/``lobe_max`` bound the half-width at
    half maximum of the scattering lobe; ``gain_min``/``gain_max`` bound the
    per-bounce reflection strength.  ``curvature_scale`` multiplies the
    wavenumber to set the reference curvature at each frequency.
    """

    lobe_min: float = np.deg2rad(5.0)
    lobe_max: float = np.deg2rad(150.0)
    gain_min: float = 0.05
    gain_max: float = 1.0
    curvature_scale: float = 1.0

    def validate(self):
        if not (0.0 < self.lobe_min <= self.lobe_max <= np.pi):
            raise InvalidMaterialError(
                f"need 0 < lobe_min <= lobe_max <= pi, got "
                f"({self.lobe_min}, {self.lobe_max})"
            )
        if not (0.0 <= self.gain_min <= self.gain_max <= 1.0):
            raise InvalidMaterialError(
                f"need 0 <= gain_min <= gain_max <= 1, got "
                f"({self.gain_min}, {self.gain_max})"
            )
        if not self.curvature_scale > 0.0:
            raise InvalidMaterialError("curvature_scale must be positive")
        return self


def lobe_profile(angle, width):
    """Gaussian lobe amplitude; equals 0.5 at ``angle == width``."""
    ratio = np.asarray(angle) / width
    return np.exp(-LN2 * ratio * ratio)


@dataclass
class BrdfField:
    """Lazy per-(face, frequency) lobe widths and reflection gains."""

    face_curvature: np.ndarray  # (f,)
    freqs: np.ndarray           # (k,) Hz, from the simulation grid
    material: MaterialParams
    speed_of_sound: float = 343.0

    @property
    def n_faces(self) -> int:
        return len(self.face_curvature)

    def saturation(self, face_idx=None, freq_idx=None) -> np.ndarray:
        """Curvature saturation s = x / (1 + x) with x the face curvature
        over the reference curvature at each frequency.  Shape
        (len(face_idx), len(freq_idx)).  s -> 1 for curved-vs-wavelength
        faces, 0 for flat ones; at 0 Hz any curved face saturates."""
        cm = self.face_curvature
        if face_idx is not None:
            cm = cm[face_idx]
        freqs = self.freqs if freq_idx is None else self.freqs[freq_idx]
        ref = (2.0 * np.pi * freqs / self.speed_of_sound) * \
            self.material.curvature_scale
        with np.errstate(divide="ignore", invalid="ignore"):
            x = cm[:, None] / ref[None, :]
            # 0/0 means flat face at DC: stays flat
            x = np.where(np.isnan(x), 0.0, x)
            sat = np.where(np.isinf(x), 1.0, x / (1.0 + x))
        return sat

    def lobe_width(self, face_idx=None, freq_idx=None) -> np.ndarray:
        """Lobe half-width at half maximum, radians."""
        s = self.saturation(face_idx, freq_idx)
        m = self.material
        return m.lobe_min + (m.lobe_max - m.lobe_min) * s

    def reflection_gain(self, face_idx=None, freq_idx=None) -> np.ndarray:
        """Per-bounce amplitude gain in [gain_min, gain_max]."""
        s = self.saturation(face_idx, freq_idx)
        m = self.material
        return m.gain_max - (m.gain_max - m.gain_min) * s


def derive_brdf(
    curvature: CurvatureField,
    freqs: np.ndarray,
    material: MaterialParams | None = None,
    speed_of_sound: float = 343.0,
) -> BrdfField:
    """Bind a curvature field to a frequency grid and material bounds.

    ``freqs`` must be non-negative and strictly increasing (a DC bin is
    allowed; real transfer grids start at 0 Hz).
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    if freqs.ndim != 1 or len(freqs) == 0:
        raise ValueError("freqs must be a non-empty 1-d array")
    if freqs[0] < 0 or np.any(np.diff(freqs) <= 0):
        raise ValueError("freqs must be non-negative and strictly increasing")
    material = (material or MaterialParams()).validate()
    if speed_of_sound <= 0:
        raise InvalidMaterialError("speed_of_sound must be positive")
    return BrdfField(
        face_curvature=np.asarray(curvature.face_curvature, dtype=np.float64),
        freqs=freqs,
        material=material,
        speed_of_sound=float(speed_of_sound),
    )
