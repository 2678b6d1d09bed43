"""Frequency-domain echo synthesis.

Every acoustic path becomes a one-sided transfer spectrum: the path's
frequency-dependent magnitude times a delay phasor exp(-j 2 pi f r / c) and
inverse-square spreading 1 / r^2.  Spectra accumulate per receiver and an
inverse real FFT yields the impulse response.  With a flat unit magnitude
and r chosen so the delay hits a sample, the response is a unit spike at
that sample, which pins both the FFT normalisation and the sign of the
phase convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .scene import SimParams


@dataclass
class TransferSpectrum:
    """One-sided complex transfer function for a single receiver."""

    values: np.ndarray  # (n_f,) complex
    receiver: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 1:
            raise ValueError("spectrum must be 1-d")


@dataclass
class ImpulseResponseSet:
    """Per-receiver impulse responses for both scattering channels."""

    specular: np.ndarray     # (i, n_t)
    diffraction: np.ndarray  # (i, n_t)
    combined: np.ndarray     # (i, n_t)
    sample_rate: float
    dropped_specular: int = 0
    dropped_diffraction: int = 0

    @property
    def n_receivers(self) -> int:
        return len(self.specular)


def _check_grid(n_values: int, params: SimParams):
    expect = params.ir_length // 2 + 1
    if n_values != expect:
        raise GridMismatchError(
            f"spectrum has {n_values} bins, grid expects {expect} "
            f"(ir_length {params.ir_length})"
        )


def band_window(params: SimParams, band: tuple | None = None) -> np.ndarray | None:
    """Weight per frequency bin confining energy to the call band.

    Returns None when no band is set (all-pass).  Inside the band the
    window is 1 except for raised-cosine ramps of ``band_transition`` width
    just inside each edge (skipped when ``band_edges`` is off, leaving a
    brick wall).  Everything outside the band is zero.
    """
    band = band if band is not None else params.band
    if band is None:
        return None
    lo, hi = float(band[0]), float(band[1])
    f = params.frequencies
    w = ((f >= lo) & (f <= hi)).astype(np.float64)
    tr = min(params.band_transition, (hi - lo) / 2.0) if params.band_edges else 0.0
    if tr > 0:
        rise = (f >= lo) & (f < lo + tr)
        w[rise] = 0.5 - 0.5 * np.cos(np.pi * (f[rise] - lo) / tr)
        fall = (f > hi - tr) & (f <= hi)
        w[fall] = 0.5 - 0.5 * np.cos(np.pi * (hi - f[fall]) / tr)
    return w


def delay_phasor(freqs: np.ndarray, path_length, speed_of_sound: float):
    """exp(-j 2 pi f r / c), broadcasting path lengths against bins."""
    r = np.asarray(path_length, dtype=np.float64)
    return np.exp(
        (-2j * np.pi / speed_of_sound) * np.multiply.outer(r, freqs)
    )


def synthesize_transfer(
    magnitude: np.ndarray,
    path_length: float,
    params: SimParams,
    receiver: int = 0,
    window: np.ndarray | None = None,
) -> TransferSpectrum:
    """Spectrum of a single path: magnitude, delay phase, 1/r^2 spreading."""
    magnitude = np.asarray(magnitude, dtype=np.float64)
    _check_grid(len(magnitude), params)
    if path_length <= 0:
        raise ValueError("path_length must be positive")
    f = params.frequencies
    values = magnitude * delay_phasor(f, path_length, params.speed_of_sound)
    values /= path_length**2
    if window is not None:
        values = values * window
    return TransferSpectrum(values=values, receiver=receiver)


def to_time_domain(spectrum, params: SimParams) -> np.ndarray:
    """Inverse one-sided FFT onto the configured grid.

    A constant unit spectrum maps to a unit impulse at sample zero.
    """
    values = spectrum.values if isinstance(spectrum, TransferSpectrum) else spectrum
    values = np.asarray(values)
    if values.ndim == 1:
        _check_grid(len(values), params)
    else:
        _check_grid(values.shape[-1], params)
    return np.fft.irfft(values, n=params.ir_length, axis=-1)


def accumulate(spectra) -> np.ndarray:
    """Coherent sum of same-grid spectra (arrays or TransferSpectrum)."""
    arrays = [
        s.values if isinstance(s, TransferSpectrum) else np.asarray(s)
        for s in spectra
    ]
    if not arrays:
        raise ValueError("nothing to accumulate")
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise GridMismatchError("spectra have mismatched grids")
    out = np.zeros(n, dtype=np.complex128)
    for a in arrays:
        out += a
    return out


def combine(
    specular: np.ndarray,
    diffraction: np.ndarray,
    specular_gain: float = 1.0,
    diffraction_gain: float = 1.0,
) -> np.ndarray:
    """Weighted sum of the two scattering channels (time domain)."""
    specular = np.asarray(specular, dtype=np.float64)
    diffraction = np.asarray(diffraction, dtype=np.float64)
    if specular.shape != diffraction.shape:
        raise ValueError(
            f"channel shapes differ: {specular.shape} vs {diffraction.shape}"
        )
    return specular_gain * specular + diffraction_gain * diffraction


class SpectrumAccumulator:
    """Streaming per-receiver accumulation restricted to the band support.

    Contributions arrive in chunks of (rows x support bins); only bins where
    the band window is nonzero are touched, which keeps the hot loop small
    on narrowband runs.  Chunk boundaries are fixed by the caller, so the
    summation order (and hence the float result) does not depend on worker
    count.
    """

    def __init__(self, n_receivers: int, params: SimParams,
                 window: np.ndarray | None):
        self.params = params
        self.n_receivers = n_receivers
        n_f = params.ir_length // 2 + 1
        if window is None:
            self.support = np.arange(n_f)
            self.weights = np.ones(n_f)
        else:
            _check_grid(len(window), params)
            self.support = np.flatnonzero(window > 0)
            self.weights = window[self.support]
        self.freqs = params.frequencies[self.support]
        self._sup = np.zeros((n_receivers, len(self.support)), dtype=np.complex128)
        self.dropped = 0

    def partial(self, receiver_idx: np.ndarray, magnitudes: np.ndarray,
                path_lengths: np.ndarray,
                amplitudes: np.ndarray | None = None):
        """Per-receiver partial spectrum of a chunk of rows.

        ``magnitudes`` is (rows, n_support) evaluated on the support bins;
        ``amplitudes`` optionally scales rows (occlusion, Monte-Carlo
        weights).  Returns ``(partial, dropped)`` without touching the
        accumulator, so callers control the reduction order.
        """
        params = self.params
        keep = path_lengths < params.max_path_length
        dropped = int(len(keep) - keep.sum())
        if not np.all(keep):
            receiver_idx = receiver_idx[keep]
            magnitudes = magnitudes[keep]
            path_lengths = path_lengths[keep]
            amplitudes = amplitudes[keep] if amplitudes is not None else None
        out = np.zeros_like(self._sup)
        if len(path_lengths) == 0:
            return out, dropped
        rows = magnitudes * delay_phasor(
            self.freqs, path_lengths, params.speed_of_sound
        )
        scale = self.weights / path_lengths[:, None] ** 2
        if amplitudes is not None:
            scale = scale * amplitudes[:, None]
        rows *= scale
        for i in range(self.n_receivers):
            sel = receiver_idx == i
            if np.any(sel):
                out[i] = rows[sel].sum(axis=0)
        return out, dropped

    def add_partial(self, part: np.ndarray, dropped: int = 0):
        self._sup += part
        self.dropped += dropped

    def add(self, receiver_idx: np.ndarray, magnitudes: np.ndarray,
            path_lengths: np.ndarray, amplitudes: np.ndarray | None = None):
        """Accumulate one chunk of rows immediately."""
        self.add_partial(
            *self.partial(receiver_idx, magnitudes, path_lengths, amplitudes)
        )

    @property
    def spectra(self) -> np.ndarray:
        full = np.zeros(
            (self.n_receivers, self.params.ir_length // 2 + 1),
            dtype=np.complex128,
        )
        full[:, self.support] = self._sup
        return full

    def impulse_responses(self) -> np.ndarray:
        return np.fft.irfft(self.spectra, n=self.params.ir_length, axis=-1)
