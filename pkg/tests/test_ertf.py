"""Directivity targets, steering, and the joint FIR least-squares fit."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from echotrace.errors import SingularFitError
from echotrace.ertf import (
    DirectivityTarget,
    ErtfFilterBank,
    analytic_target,
    apply_filter_bank,
    evaluate_realized_pattern,
    fit_fir_bank,
    load_directivity_csv,
    load_filter_bank,
    save_filter_bank,
    steering_matrix,
)
from echotrace.scene import SensorArray
from echotrace.signals import convolve


def _ring(n):
    ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([np.cos(ang), np.sin(ang), np.zeros(n)])


def test_steering_matrix_definition():
    c = 343.0
    array = SensorArray(emitter=[0.1, 0.0, 0.0],
                        receivers=[[0.1, 0.0, 0.0], [0.1, 0.02, 0.0]])
    psi = np.array([[0.0, 1.0, 0.0]])
    freqs = np.array([10_000.0, 40_000.0])
    a = steering_matrix(array, psi, freqs, c)
    assert a.shape == (2, 1, 2)
    # element at the emitter: unit response at every frequency
    assert_allclose(a[:, 0, 0], 1.0, atol=1e-15)
    # offset element: the wave arrives early by psi . (p - e) / c
    expect = np.exp(2j * np.pi * freqs * 0.02 / c)
    assert_allclose(a[:, 0, 1], expect, rtol=1e-12)


def test_steering_sign_matches_propagation_phase():
    # a distant point source along psi produces relative channel phases
    # exp(-j 2 pi f (r_i - r_ref) / c); for r >> spacing this equals the
    # steering entry, pinning the + sign against the physical model
    c, f, big = 343.0, 50_000.0, 100.0
    psi = np.array([0.6, 0.8, 0.0])
    emitter = np.zeros(3)
    offset = np.array([0.004, -0.006, 0.008])
    source = emitter + big * psi
    r_ref = np.linalg.norm(source - emitter)
    r_i = np.linalg.norm(source - offset)
    physical = np.exp(-2j * np.pi * f * (r_i - r_ref) / c)
    array = SensorArray(emitter=emitter, receivers=offset[None, :])
    steer = steering_matrix(array, psi[None, :], np.array([f]), c)[0, 0, 0]
    assert np.abs(np.angle(steer / physical)) < 1e-3


def test_target_validation():
    with pytest.raises(ValueError):
        DirectivityTarget(directions=[[1.0, 1.0, 0.0]], freqs=[1.0],
                          gains=[[1.0]])
    with pytest.raises(ValueError):
        DirectivityTarget(directions=[[1.0, 0.0, 0.0]], freqs=[1.0, 2.0],
                          gains=[[1.0]])


def test_analytic_patterns():
    dirs = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
    freqs = np.array([1e4, 2e4])
    omni = analytic_target("omni", dirs, freqs)
    assert_allclose(omni.gains, 1.0, atol=0)
    card = analytic_target("cardioid", dirs, freqs, axis=(2.0, 0, 0))
    assert_allclose(card.gains[0], [1.0, 0.0, 0.5], atol=1e-15)
    assert_allclose(card.gains[0], card.gains[1], atol=0)
    cos2 = analytic_target("cosine", dirs, freqs, order=2.0)
    assert_allclose(cos2.gains[0], [1.0, 0.0, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        analytic_target("figure-eight", dirs, freqs)


def _lstsq_oracle(target, array, n_taps, fs, c, ridge, group_delay):
    """Stacked real least squares solved by QR (np.linalg.lstsq) instead of
    normal equations: rows are Re/Im of every (freq, direction) constraint
    plus sqrt(damping) ridge rows."""
    a = steering_matrix(array, target.directions, target.freqs, c)
    l = np.arange(n_taps)
    n_recv = array.n_receivers
    n_unknown = n_recv * n_taps
    blocks, rhs = [], []
    for k, f in enumerate(target.freqs):
        ph = np.exp(-2j * np.pi * f * l / fs)
        c_k = (a[k][:, :, None] * ph[None, None, :]).reshape(-1, n_unknown)
        e_k = target.gains[k] * np.exp(-2j * np.pi * f * group_delay / fs)
        blocks.append(c_k)
        rhs.append(e_k)
    c_all = np.vstack(blocks)
    e_all = np.concatenate(rhs)
    gram_trace = np.sum(np.abs(c_all) ** 2)
    damp = np.sqrt(ridge * gram_trace / n_unknown)
    big = np.vstack([c_all.real, c_all.imag, damp * np.eye(n_unknown)])
    vec = np.concatenate([e_all.real, e_all.imag, np.zeros(n_unknown)])
    x, *_ = np.linalg.lstsq(big, vec, rcond=None)
    return x.reshape(n_recv, n_taps)


def test_fit_matches_independent_least_squares():
    rng = np.random.default_rng(7)
    array = SensorArray(emitter=np.zeros(3),
                        receivers=rng.normal(scale=0.01, size=(4, 3)))
    fs, c = 400_000.0, 343.0
    freqs = np.linspace(20_000.0, 80_000.0, 6)
    target = analytic_target("cardioid", _ring(10), freqs)
    bank, residual = fit_fir_bank(target, array, n_taps=8, sample_rate=fs,
                                  speed_of_sound=c, ridge=1e-6,
                                  group_delay=4.0)
    oracle = _lstsq_oracle(target, array, 8, fs, c, 1e-6, 4.0)
    assert_allclose(bank.taps, oracle, rtol=0, atol=1e-8)
    # residual bookkeeping: recompute from the realized pattern
    realized = evaluate_realized_pattern(bank, array, target.directions,
                                         freqs, c)
    delay = np.exp(-2j * np.pi * freqs * 4.0 / fs)
    again = np.sum(np.abs(realized - target.gains * delay[:, None]) ** 2)
    assert residual == pytest.approx(again, rel=1e-12)


def test_exact_fit_recovers_delayed_impulse():
    # one receiver at the emitter sees unit steering, so matching a flat
    # gain g with integer group delay d has exact solution taps[d] = g
    array = SensorArray(emitter=np.zeros(3), receivers=np.zeros((1, 3)))
    fs = 250_000.0
    freqs = np.linspace(5_000.0, 115_000.0, 16)
    target = analytic_target("omni", [[1.0, 0, 0]], freqs)
    target.gains *= 0.7
    bank, residual = fit_fir_bank(target, array, n_taps=8, sample_rate=fs,
                                  ridge=0.0, group_delay=3.0)
    expect = np.zeros((1, 8))
    expect[0, 3] = 0.7
    assert_allclose(bank.taps, expect, atol=1e-9)
    assert residual < 1e-18


def test_degenerate_array_raises_singular_fit():
    # two coincident receivers with no damping: the normal matrix cannot
    # be positive definite
    array = SensorArray(emitter=np.zeros(3),
                        receivers=[[0.01, 0, 0], [0.01, 0, 0]])
    target = analytic_target("omni", _ring(6), np.array([30_000.0]))
    with pytest.raises(SingularFitError):
        fit_fir_bank(target, array, n_taps=2, sample_rate=200_000.0,
                     ridge=0.0)


def test_fit_validation():
    array = SensorArray(emitter=np.zeros(3), receivers=np.zeros((1, 3)))
    target = analytic_target("omni", [[1.0, 0, 0]], np.array([1e4]))
    with pytest.raises(ValueError):
        fit_fir_bank(target, array, n_taps=0)


def test_apply_filter_bank_is_filtered_sum():
    rng = np.random.default_rng(3)
    taps = rng.normal(size=(2, 5))
    bank = ErtfFilterBank(taps=taps, sample_rate=1e5)
    channels = rng.normal(size=(2, 40))
    out = apply_filter_bank(bank, channels)
    assert out.shape == (44,)
    oracle = (np.convolve(channels[0], taps[0])
              + np.convolve(channels[1], taps[1]))
    assert_allclose(out, oracle, rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        apply_filter_bank(bank, np.zeros((3, 10)))


def test_prefilter_chains_before_the_bank():
    rng = np.random.default_rng(4)
    taps = rng.normal(size=(2, 4))
    pre = rng.normal(size=(2, 3))
    bank = ErtfFilterBank(taps=taps, sample_rate=1e5, prefilter=pre)
    channels = rng.normal(size=(2, 30))
    out = apply_filter_bank(bank, channels)
    assert out.shape == (30 + 4 - 1 + 3 - 1,)
    oracle = sum(
        np.convolve(np.convolve(channels[i], pre[i]), taps[i])
        for i in range(2)
    )
    assert_allclose(out, oracle, rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        ErtfFilterBank(taps=taps, sample_rate=1e5, prefilter=np.zeros((3, 2)))


def test_bank_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    bank = ErtfFilterBank(taps=rng.normal(size=(3, 17)),
                          sample_rate=192_000.0)
    path = tmp_path / "bank.bin"
    save_filter_bank(path, bank)
    back = load_filter_bank(path)
    assert back.sample_rate == 192_000.0
    assert_allclose(back.taps, bank.taps, rtol=0, atol=0)

    (tmp_path / "short.bin").write_bytes(b"\x01\x02")
    with pytest.raises(ValueError):
        load_filter_bank(tmp_path / "short.bin")
    blob = path.read_bytes()
    (tmp_path / "trunc.bin").write_bytes(blob[:-8])
    with pytest.raises(ValueError):
        load_filter_bank(tmp_path / "trunc.bin")


def test_directivity_csv_grid(tmp_path):
    lines = ["az_deg,el_deg,freq_hz,gain_real,gain_imag"]
    cells = []
    for f in (20_000.0, 40_000.0):
        for az, el in ((0.0, 0.0), (90.0, 0.0), (0.0, 90.0)):
            cells.append((az, el, f, f / 40_000.0, -0.25))
    rng = np.random.default_rng(6)
    for az, el, f, re, im in [cells[i] for i in rng.permutation(len(cells))]:
        lines.append(f"{az},{el},{f},{re},{im}")
    path = tmp_path / "pattern.csv"
    path.write_text("\n".join(lines) + "\n")
    target = load_directivity_csv(path)
    assert target.gains.shape == (2, 3)
    assert_allclose(np.linalg.norm(target.directions, axis=1), 1.0,
                    atol=1e-12)
    assert_allclose(sorted(target.freqs), [20_000.0, 40_000.0])
    assert_allclose(target.gains[0], 0.5 - 0.25j, atol=1e-12)
    assert_allclose(target.gains[1], 1.0 - 0.25j, atol=1e-12)
    # az=0,el=0 is +x; az=90 is +y; el=90 is +z
    got = {tuple(np.round(d, 9)) for d in target.directions}
    assert (1.0, 0.0, 0.0) in got and (0.0, 1.0, 0.0) in got

    (tmp_path / "hole.csv").write_text(
        "\n".join(lines[:-1]) + "\n"
    )
    with pytest.raises(ValueError):
        load_directivity_csv(tmp_path / "hole.csv")
    (tmp_path / "cols.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_directivity_csv(tmp_path / "cols.csv")
    (tmp_path / "empty.csv").write_text(
        "az_deg,el_deg,freq_hz,gain_real,gain_imag\n"
    )
    with pytest.raises(ValueError):
        load_directivity_csv(tmp_path / "empty.csv")


def test_realized_pattern_uses_the_same_channels_it_fits():
    # after fitting, pushing an actual delayed plane wave through the bank
    # reproduces the realized gain: the fit, the evaluator, and the
    # time-domain path agree with each other
    rng = np.random.default_rng(8)
    array = SensorArray(emitter=np.zeros(3),
                        receivers=rng.normal(scale=0.005, size=(3, 3)))
    fs, c, f0 = 500_000.0, 343.0, 60_000.0
    freqs = np.linspace(40_000.0, 80_000.0, 5)
    target = analytic_target("cardioid", _ring(8), freqs)
    bank, _ = fit_fir_bank(target, array, n_taps=16, sample_rate=fs,
                           speed_of_sound=c, group_delay=8.0)
    psi = np.array([[np.cos(0.3), np.sin(0.3), 0.0]])
    gain = evaluate_realized_pattern(bank, array, psi, np.array([f0]), c)[0, 0]
    # steady-state complex tone through each channel with its arrival lead
    t = np.arange(4096) / fs
    delays = (array.receivers - array.emitter) @ psi[0] / c
    channels = np.exp(2j * np.pi * f0 * (t[None, :] + delays[:, None]))
    out = sum(
        np.convolve(channels[i], bank.taps[i]) for i in range(3)
    )
    mid = out[2048]  # steady state, away from edges
    ref = np.exp(2j * np.pi * f0 * t[2048])
    assert_allclose(mid / ref, gain, rtol=1e-6)


def test_convolve_helper_matches_numpy():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=33), rng.normal(size=7)
    assert_allclose(convolve(a, b), np.convolve(a, b), rtol=0, atol=1e-12)
