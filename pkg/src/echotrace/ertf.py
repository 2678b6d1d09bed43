"""Spatial directivity via fitted FIR filter banks.

A receiver array only measures at its element positions; to impose an
arbitrary directional sensitivity (an ear shape, a measured pattern, a
textbook cardioid) each element gets an FIR filter and the filtered sum is
taken as the ear signal.  The taps solve a joint least-squares problem:
over a grid of directions and frequencies, the array's steered response
through the filters should match the target gain.  Plane-wave incidence is
assumed, with phase referenced to the emitter position.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import SingularFitError
from .scene import SensorArray
from .signals import convolve


@dataclass
class DirectivityTarget:
    """Desired complex gain per (frequency, direction)."""

    directions: np.ndarray  # (p, 3) unit vectors, sensor frame
    freqs: np.ndarray       # (k,) Hz
    gains: np.ndarray       # (k, p) complex

    def __post_init__(self):
        self.directions = np.atleast_2d(
            np.asarray(self.directions, dtype=np.float64)
        )
        self.freqs = np.asarray(self.freqs, dtype=np.float64)
        self.gains = np.atleast_2d(np.asarray(self.gains, dtype=np.complex128))
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("target directions must be unit vectors")
        if self.gains.shape != (len(self.freqs), len(self.directions)):
            raise ValueError(
                f"gains shape {self.gains.shape} does not match "
                f"{len(self.freqs)} freqs x {len(self.directions)} directions"
            )


@dataclass
class ErtfFilterBank:
    """Per-receiver FIR taps fitted against a directivity target."""

    taps: np.ndarray  # (i, l) float64
    sample_rate: float
    group_delay: float = 0.0  # samples, target linear phase used in the fit
    prefilter: np.ndarray | None = None  # optional per-receiver FIR (i, lp)

    def __post_init__(self):
        self.taps = np.atleast_2d(np.asarray(self.taps, dtype=np.float64))
        if self.prefilter is not None:
            pre = np.atleast_2d(np.asarray(self.prefilter, dtype=np.float64))
            if len(pre) != len(self.taps):
                raise ValueError(
                    "prefilter must have one row per receiver"
                )
            self.prefilter = pre

    @property
    def n_receivers(self) -> int:
        return self.taps.shape[0]

    @property
    def n_taps(self) -> int:
        return self.taps.shape[1]


def steering_matrix(
    array: SensorArray,
    directions: np.ndarray,
    freqs: np.ndarray,
    speed_of_sound: float = 343.0,
) -> np.ndarray:
    """Plane-wave element responses, shape (k, p, i).

    ``directions`` point from the array towards the source.  A wave
    arriving from psi reaches element i at position p_i (referenced to the
    emitter) early by (psi . p_i) / c, i.e. with phase
    exp(+j 2 pi f (psi . p_i) / c) relative to the reference point; this
    matches the sign the propagation model produces, so fitted banks steer
    the physical channels, not their mirror image.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    freqs = np.asarray(freqs, dtype=np.float64)
    rel = array.receivers - array.emitter[None, :]
    proj = directions @ rel.T  # (p, i) metres
    return np.exp(
        (2j * np.pi / speed_of_sound)
        * freqs[:, None, None] * proj[None, :, :]
    )


def _tap_phases(freqs: np.ndarray, n_taps: int, sample_rate: float):
    """exp(-j 2 pi f l / fs), shape (k, l)."""
    l = np.arange(n_taps)
    return np.exp(-2j * np.pi * np.outer(freqs / sample_rate, l))


def fit_fir_bank(
    target: DirectivityTarget,
    array: SensorArray,
    n_taps: int = 128,
    sample_rate: float = 1_000_000.0,
    speed_of_sound: float = 343.0,
    ridge: float = 1e-6,
    group_delay: float = 0.0,
) -> tuple[ErtfFilterBank, float]:
    """Fit one FIR filter per receiver to realise the target pattern.

    Minimises the summed squared error between the filtered-and-summed
    array response and the target gain over every (frequency, direction)
    pair, jointly across all taps.  ``ridge`` adds Tikhonov damping scaled
    by the mean diagonal of the normal matrix; ``group_delay`` multiplies
    the target by a linear phase so realisable causal filters are not asked
    to be anticipatory.

    Returns the bank and the achieved sum of squared errors (without the
    ridge term).
    """
    if n_taps < 1:
        raise ValueError("n_taps must be >= 1")
    n_recv = array.n_receivers
    n_unknown = n_recv * n_taps
    freqs = target.freqs

    a = steering_matrix(array, target.directions, freqs, speed_of_sound)
    phases = _tap_phases(freqs, n_taps, sample_rate)
    delay = np.exp(-2j * np.pi * freqs * group_delay / sample_rate)

    gram = np.zeros((n_unknown, n_unknown))
    rhs = np.zeros(n_unknown)
    for k in range(len(freqs)):
        # rows: directions; cols: (receiver, tap) pairs
        c = (a[k][:, :, None] * phases[k][None, None, :]).reshape(
            len(target.directions), n_unknown
        )
        e = target.gains[k] * delay[k]
        gram += (c.conj().T @ c).real
        rhs += (c.conj().T @ e).real
    if ridge > 0:
        gram = gram + np.eye(n_unknown) * (ridge * np.trace(gram) / n_unknown)
    try:
        cho = sla.cho_factor(gram)
        taps = sla.cho_solve(cho, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularFitError(
            f"normal matrix is singular for {n_recv} receivers x "
            f"{n_taps} taps; add ridge damping or reduce taps"
        ) from exc

    bank = ErtfFilterBank(
        taps=taps.reshape(n_recv, n_taps),
        sample_rate=float(sample_rate),
        group_delay=float(group_delay),
    )
    realized = evaluate_realized_pattern(
        bank, array, target.directions, freqs, speed_of_sound
    )
    residual = float(
        np.sum(np.abs(realized - target.gains * delay[:, None]) ** 2)
    )
    return bank, residual


def evaluate_realized_pattern(
    bank: ErtfFilterBank,
    array: SensorArray,
    directions: np.ndarray,
    freqs: np.ndarray,
    speed_of_sound: float = 343.0,
) -> np.ndarray:
    """Complex gain the fitted bank actually realises, shape (k, p)."""
    freqs = np.asarray(freqs, dtype=np.float64)
    a = steering_matrix(array, directions, freqs, speed_of_sound)
    w = _tap_phases(freqs, bank.n_taps, bank.sample_rate) @ bank.taps.T  # (k, i)
    return np.einsum("kpi,ki->kp", a, w)


def apply_filter_bank(bank: ErtfFilterBank, channels: np.ndarray) -> np.ndarray:
    """Filter each receiver channel and sum into one ear signal.

    ``channels`` is (i, t); the result has length t + n_taps - 1 (plus the
    prefilter length - 1 when a per-channel prefilter is attached).
    """
    channels = np.atleast_2d(np.asarray(channels, dtype=np.float64))
    if len(channels) != bank.n_receivers:
        raise ValueError(
            f"bank expects {bank.n_receivers} channels, got {len(channels)}"
        )
    n_out = channels.shape[1] + bank.n_taps - 1
    if bank.prefilter is not None:
        n_out += bank.prefilter.shape[1] - 1
    out = np.zeros(n_out)
    for i in range(bank.n_receivers):
        chan = channels[i]
        if bank.prefilter is not None:
            chan = convolve(chan, bank.prefilter[i])
        out += convolve(chan, bank.taps[i])
    return out


def save_filter_bank(path, bank: ErtfFilterBank):
    """Binary layout: uint32 receiver count, uint32 tap count, float64
    sample rate, then row-major float64 taps.  Little-endian throughout."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IId", bank.n_receivers, bank.n_taps,
                             bank.sample_rate))
        fh.write(bank.taps.astype("<f8").tobytes(order="C"))


def load_filter_bank(path) -> ErtfFilterBank:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16:
            raise ValueError("filter bank file truncated in header")
        n_recv, n_taps, fs = struct.unpack("<IId", head)
        data = fh.read()
    expect = n_recv * n_taps * 8
    if len(data) != expect:
        raise ValueError(
            f"filter bank file has {len(data)} tap bytes, expected {expect}"
        )
    taps = np.frombuffer(data, dtype="<f8").reshape(n_recv, n_taps)
    return ErtfFilterBank(taps=taps.copy(), sample_rate=fs)


def analytic_target(
    kind: str,
    directions: np.ndarray,
    freqs: np.ndarray,
    axis=(1.0, 0.0, 0.0),
    order: float = 1.0,
) -> DirectivityTarget:
    """Frequency-flat textbook patterns: omni, cardioid, cosine lobe."""
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    freqs = np.asarray(freqs, dtype=np.float64)
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    cos = directions @ axis
    if kind == "omni":
        g = np.ones(len(directions))
    elif kind == "cardioid":
        g = ((1.0 + cos) / 2.0) ** order
    elif kind == "cosine":
        g = np.maximum(cos, 0.0) ** order
    else:
        raise ValueError(f"unknown analytic pattern {kind!r}")
    gains = np.broadcast_to(g, (len(freqs), len(directions))).astype(
        np.complex128
    )
    return DirectivityTarget(
        directions=directions, freqs=freqs, gains=gains.copy()
    )


def load_directivity_csv(path) -> DirectivityTarget:
    """Measured pattern from CSV columns az_deg, el_deg, freq_hz,
    gain_real, gain_imag.  Rows must fill a complete freq x direction grid
    (any row order)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"az_deg", "el_deg", "freq_hz", "gain_real", "gain_imag"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise ValueError(
                f"directivity CSV must have columns {sorted(need)}"
            )
        for row in reader:
            rows.append(
                (
                    float(row["az_deg"]),
                    float(row["el_deg"]),
                    float(row["freq_hz"]),
                    float(row["gain_real"]),
                    float(row["gain_imag"]),
                )
            )
    if not rows:
        raise ValueError("directivity CSV is empty")
    data = np.asarray(rows)
    dirkeys, didx = np.unique(data[:, :2], axis=0, return_inverse=True)
    freqs, fidx = np.unique(data[:, 2], return_inverse=True)
    gains = np.full((len(freqs), len(dirkeys)), np.nan, dtype=np.complex128)
    gains[fidx, didx] = data[:, 3] + 1j * data[:, 4]
    if np.any(np.isnan(gains)):
        raise ValueError("directivity CSV does not cover the full grid")
    az = np.deg2rad(dirkeys[:, 0])
    el = np.deg2rad(dirkeys[:, 1])
    directions = np.column_stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
    )
    return DirectivityTarget(directions=directions, freqs=freqs, gains=gains)
