"""Emitted calls and the final receive chain.

Calls are parametric sweeps or tones; receiving convolves the call with
the ear impulse responses produced by the filter banks.  Convolution uses
the overlap-free FFT path once operands get long, with the direct form for
short kernels; both agree to near machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import InvalidBandError

_FFT_THRESHOLD = 1024


def convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full linear convolution, method switched on operand length."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if max(len(a), len(b)) <= _FFT_THRESHOLD:
        return np.convolve(a, b, mode="full")
    return sps.fftconvolve(a, b, mode="full")


@dataclass
class EmittedCall:
    """Sampled call waveform plus the band it occupies."""

    samples: np.ndarray
    sample_rate: float
    band: tuple  # (lo, hi) Hz

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)


def synthesize_call(
    kind: str = "linear",
    f_start: float = 80_000.0,
    f_end: float = 40_000.0,
    duration: float = 0.003,
    sample_rate: float = 1_000_000.0,
    window: str | None = "tukey",
    window_param: float = 0.25,
) -> EmittedCall:
    """Chirp or tone, tapered and peak-normalised.

    ``kind``: ``linear`` or ``hyperbolic`` sweeps from ``f_start`` to
    ``f_end``; ``cf`` is a constant-frequency tone at ``f_start``.
    Frequencies must stay inside (0, fs/2); an empty duration is refused.
    """
    if duration <= 0:
        raise InvalidBandError("call duration must be positive")
    nyquist = sample_rate / 2.0
    freqs = (f_start, f_start if kind == "cf" else f_end)
    if min(freqs) <= 0 or max(freqs) >= nyquist:
        raise InvalidBandError(
            f"call frequencies {freqs} outside (0, {nyquist:g})"
        )
    n = int(round(duration * sample_rate))
    if n < 2:
        raise InvalidBandError("duration too short for the sample rate")
    t = np.arange(n) / sample_rate

    if kind == "linear":
        samples = sps.chirp(t, f_start, t[-1], f_end, method="linear")
    elif kind == "hyperbolic":
        samples = sps.chirp(t, f_start, t[-1], f_end, method="hyperbolic")
    elif kind == "cf":
        samples = np.sin(2.0 * np.pi * f_start * t)
    else:
        raise ValueError(f"unknown call kind {kind!r}")

    if window is not None:
        if window == "tukey":
            samples = samples * sps.windows.tukey(n, window_param)
        else:
            samples = samples * sps.get_window(window, n)
    peak = np.abs(samples).max()
    if peak > 0:
        samples = samples / peak
    return EmittedCall(
        samples=samples,
        sample_rate=float(sample_rate),
        band=(float(min(freqs)), float(max(freqs))),
    )


def receive(call: EmittedCall, ear_irs, sample_rate: float | None = None):
    """Convolve the call with each ear impulse response.

    ``ear_irs`` is a sequence of 1-d arrays.  When ``sample_rate`` is given
    it must match the call's rate.
    """
    if sample_rate is not None and sample_rate != call.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: call {call.sample_rate} Hz, "
            f"ears {sample_rate} Hz"
        )
    return [convolve(call.samples, np.asarray(ir)) for ir in ear_irs]


@dataclass
class BinauralResult:
    """Two-ear bundle: per-ear impulse responses and received signals."""

    left_ir: np.ndarray
    right_ir: np.ndarray
    left_signal: np.ndarray
    right_signal: np.ndarray
    metadata: dict


def filter_ears(channels, left_bank, right_bank):
    """Collapse multichannel IRs into the two ears' impulse responses.

    ``channels`` is the (receiver, time) combined impulse-response matrix;
    each bank filters its own receiver set and sums.
    """
    from .ertf import apply_filter_bank

    return (
        apply_filter_bank(left_bank, channels),
        apply_filter_bank(right_bank, channels),
    )


def render_binaural(
    channels,
    left_bank,
    right_bank,
    call: EmittedCall,
    metadata: dict | None = None,
) -> BinauralResult:
    """Ears then call: the standard receive chain in one call."""
    h_l, h_r = filter_ears(channels, left_bank, right_bank)
    s_l, s_r = receive(call, [h_l, h_r])
    return BinauralResult(
        left_ir=h_l,
        right_ir=h_r,
        left_signal=s_l,
        right_signal=s_r,
        metadata=dict(metadata or {}),
    )
