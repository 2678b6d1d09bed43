"""End-to-end simulation: config in, impulse responses and signals out.

Stages: mesh preparation (repair, curvature, reflection model), specular
ray pass, Monte-Carlo diffraction pass, spectral synthesis, per-ear
filtering, call convolution.  Each stage is timed and counted in the run
metadata.  All randomness flows from two child generators spawned off the
configured seed, so results are reproducible bit for bit; worker threads
only evaluate fixed-boundary chunks whose partial sums are reduced in
chunk order, keeping float output independent of the worker count.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .brdf import BrdfField, derive_brdf
from .config import EarSpec, SimulationConfig
from .curvature import CurvatureField, estimate_curvature
from .diffraction import (
    build_sampling_distribution,
    evaluate_diffraction,
    sample_diffraction_points,
)
from .errors import ConfigError, NoDiffractionCandidatesError
from .ertf import (
    ErtfFilterBank,
    analytic_target,
    apply_filter_bank,
    fit_fir_bank,
    load_directivity_csv,
    load_filter_bank,
)
from .io import write_json, write_matrix_csv, write_wav
from .mesh import Mesh, repair_mesh, transform_raw
from .raytrace import ContributionBatch, generate_rays, sample_to_receivers, trace_paths
from .scene import SimParams, partition_sphere_directions, transform_sensor
from .signals import EmittedCall, receive, synthesize_call
from .spectral import ImpulseResponseSet, SpectrumAccumulator, band_window, combine
from .stl_io import RawMesh, load_stl

_ROW_CHUNK = 4096  # contribution rows per accumulation chunk, fixed


@dataclass
class SceneBundle:
    """Everything the tracing passes need, fully in world coordinates."""

    mesh: Mesh
    curvature: CurvatureField
    brdf: BrdfField
    emitter: np.ndarray
    receivers: np.ndarray


@dataclass
class SimResult:
    irs: ImpulseResponseSet
    ears: dict        # name -> ear impulse response
    received: dict    # name -> call convolved with the ear response
    call: EmittedCall
    metadata: dict


def prepare_scene(
    config: SimulationConfig,
    raw_mesh: RawMesh | None = None,
    mesh_pose_matrix: np.ndarray | None = None,
) -> SceneBundle:
    """Load, transform and repair the mesh; derive curvature and the
    reflection model; pose the sensor.  ``raw_mesh`` and
    ``mesh_pose_matrix`` allow scan drivers to bypass file reads and swap
    poses without touching the config."""
    if raw_mesh is None:
        raw_mesh = load_stl(config.resolve_path(config.mesh.path))
    matrix = (
        mesh_pose_matrix if mesh_pose_matrix is not None
        else config.mesh.pose.matrix
    )
    placed = transform_raw(raw_mesh, matrix, scale=config.mesh.scale)
    mesh = repair_mesh(placed, merge_tolerance=config.mesh.merge_tolerance)
    curvature = estimate_curvature(mesh)
    brdf = derive_brdf(
        curvature,
        config.params.frequencies,
        config.mesh.material,
        speed_of_sound=config.params.speed_of_sound,
    )
    emitter, receivers = transform_sensor(config.sensor, config.sensor_pose)
    return SceneBundle(
        mesh=mesh,
        curvature=curvature,
        brdf=brdf,
        emitter=emitter,
        receivers=receivers,
    )


def _ear_group(config: SimulationConfig, name: str) -> np.ndarray:
    if name in config.sensor.groups:
        return np.asarray(config.sensor.groups[name], dtype=np.int64)
    return np.arange(config.sensor.n_receivers, dtype=np.int64)


def _design_freqs(params: SimParams, count: int) -> np.ndarray:
    if params.band is not None:
        lo, hi = params.band
        inset = min(params.band_transition, (hi - lo) / 4.0)
        lo, hi = lo + inset, hi - inset
    else:
        lo, hi = 0.05 * params.sample_rate, 0.45 * params.sample_rate
    return np.linspace(lo, hi, count)


def build_ear_bank(
    config: SimulationConfig, name: str, spec: EarSpec
) -> tuple[ErtfFilterBank, float | None]:
    """Resolve one ear's bank: load it, fit it, or make a pass-through."""
    group = _ear_group(config, name)
    sub = _subarray(config, group)
    params = config.params

    if spec.kind == "impulse":
        taps = np.zeros((len(group), 1))
        taps[0, 0] = 1.0
        return ErtfFilterBank(taps=taps, sample_rate=params.sample_rate), None
    if spec.kind == "file":
        bank = load_filter_bank(config.resolve_path(spec.path))
        if bank.sample_rate != params.sample_rate:
            raise ConfigError(
                f"ear {name!r}: bank sample rate {bank.sample_rate} does not "
                f"match params.sample_rate {params.sample_rate}"
            )
        if bank.n_receivers != len(group):
            raise ConfigError(
                f"ear {name!r}: bank has {bank.n_receivers} channels, "
                f"group has {len(group)}"
            )
        return bank, None

    group_delay = (
        spec.n_taps / 2.0 if spec.group_delay is None else spec.group_delay
    )
    if spec.kind == "csv":
        target = load_directivity_csv(config.resolve_path(spec.path))
    else:
        directions = partition_sphere_directions(
            spec.fit_directions, hemisphere=spec.fit_hemisphere
        )
        target = analytic_target(
            spec.kind, directions, _design_freqs(params, spec.fit_freqs),
            axis=spec.axis, order=spec.order,
        )
    bank, residual = fit_fir_bank(
        target,
        sub,
        n_taps=spec.n_taps,
        sample_rate=params.sample_rate,
        speed_of_sound=params.speed_of_sound,
        ridge=spec.ridge,
        group_delay=group_delay,
    )
    return bank, residual


def _subarray(config: SimulationConfig, group: np.ndarray):
    from .scene import SensorArray

    return SensorArray(
        emitter=config.sensor.emitter.copy(),
        receivers=config.sensor.receivers[group],
    )


def build_banks(config: SimulationConfig) -> dict:
    """name -> (bank, fit residual or None) for every configured ear."""
    return {
        name: build_ear_bank(config, name, spec)
        for name, spec in config.ears.items()
    }


def _accumulate(
    batch: ContributionBatch,
    brdf: BrdfField,
    acc: SpectrumAccumulator,
    workers: int = 1,
):
    """Chunked, order-stable accumulation of a contribution batch."""
    n = len(batch)
    slices = [slice(s, min(s + _ROW_CHUNK, n)) for s in range(0, n, _ROW_CHUNK)]

    def partial(sl):
        mags = batch.magnitudes(brdf, sl, acc.support)
        return acc.partial(
            batch.receiver_idx[sl],
            mags,
            batch.path_length[sl],
            batch.amplitude[sl],
        )

    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(partial, slices))
    else:
        results = [partial(sl) for sl in slices]
    for part, dropped in results:
        acc.add_partial(part, dropped)


def run_simulation(
    config: SimulationConfig,
    workers: int = 1,
    banks: dict | None = None,
    raw_mesh: RawMesh | None = None,
    mesh_pose_matrix: np.ndarray | None = None,
    seed: int | None = None,
) -> SimResult:
    """Full pipeline for one scene pose.

    ``banks`` (from :func:`build_banks`) can be injected so scans fit the
    filters once; ``seed`` overrides ``params.seed`` for scan rows.
    """
    params = config.params
    t_start = time.perf_counter()
    timings = {}

    scene = prepare_scene(config, raw_mesh, mesh_pose_matrix)
    if banks is None:
        banks = build_banks(config)
    timings["prepare"] = time.perf_counter() - t_start

    seed = params.seed if seed is None else seed
    ray_ss, diff_ss = np.random.SeedSequence(seed).spawn(2)
    window = band_window(params)
    n_recv = len(scene.receivers)
    counts = {"n_rays": params.n_rays, "n_diffraction": params.n_diffraction}

    # specular pass
    t0 = time.perf_counter()
    rays = generate_rays(
        params.n_rays,
        config.sensor_pose,
        np.random.default_rng(ray_ss),
        jitter=params.ray_jitter,
        array=config.sensor,
    )
    chains = trace_paths(
        rays,
        scene.mesh,
        scene.brdf,
        max_bounces=params.max_bounces,
        smooth_normals=config.mesh.smooth_normals,
    )
    spec_batch = sample_to_receivers(chains, scene.receivers, scene.mesh)
    spec_acc = SpectrumAccumulator(n_recv, params, window)
    _accumulate(spec_batch, scene.brdf, spec_acc, workers)
    counts["rays_hit"] = int((chains.n_bounces > 0).sum())
    counts["specular_rows"] = len(spec_batch)
    counts["specular_occluded"] = int((spec_batch.amplitude == 0.0).sum())
    counts["specular_dropped"] = spec_acc.dropped
    timings["specular"] = time.perf_counter() - t0

    # diffraction pass
    t0 = time.perf_counter()
    diff_acc = SpectrumAccumulator(n_recv, params, window)
    counts["diffraction_rows"] = 0
    counts["diffraction_occluded"] = 0
    diffraction_active = params.n_diffraction > 0
    threshold = None
    if diffraction_active:
        try:
            dist = build_sampling_distribution(
                scene.mesh,
                scene.curvature,
                threshold=params.curvature_threshold,
                quantile=params.curvature_quantile,
            )
        except NoDiffractionCandidatesError:
            dist = None
        if dist is not None:
            threshold = dist.threshold
            face_idx, points = sample_diffraction_points(
                dist, scene.mesh, params.n_diffraction,
                np.random.default_rng(diff_ss),
            )
            diff_batch = evaluate_diffraction(
                face_idx, points, scene.emitter, scene.receivers, scene.mesh
            )
            _accumulate(diff_batch, scene.brdf, diff_acc, workers)
            counts["diffraction_rows"] = len(diff_batch)
            counts["diffraction_occluded"] = int(
                (diff_batch.amplitude == 0.0).sum()
            )
    counts["diffraction_dropped"] = diff_acc.dropped
    counts["diffraction_threshold"] = threshold
    timings["diffraction"] = time.perf_counter() - t0

    # synthesis
    t0 = time.perf_counter()
    h = spec_acc.impulse_responses()
    if params.normalize_rays:
        h = h / params.n_rays
    g = diff_acc.impulse_responses()
    combined = combine(h, g, params.specular_gain, params.diffraction_gain)
    irs = ImpulseResponseSet(
        specular=h,
        diffraction=g,
        combined=combined,
        sample_rate=params.sample_rate,
        dropped_specular=spec_acc.dropped,
        dropped_diffraction=diff_acc.dropped,
    )
    timings["synthesis"] = time.perf_counter() - t0

    # ears and received signals
    t0 = time.perf_counter()
    ears = {}
    bank_meta = {}
    for name, (bank, residual) in banks.items():
        group = _ear_group(config, name)
        ears[name] = apply_filter_bank(bank, combined[group])
        bank_meta[name] = {
            "n_taps": bank.n_taps,
            "n_channels": bank.n_receivers,
            "fit_residual": residual,
        }
    timings["ertf"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    call = synthesize_call(
        kind=config.call.kind,
        f_start=config.call.f_start,
        f_end=config.call.f_end,
        duration=config.call.duration,
        sample_rate=params.sample_rate,
        window=config.call.window,
        window_param=config.call.window_param,
    )
    received = {
        name: receive(call, [ir])[0] for name, ir in ears.items()
    }
    timings["receive"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_start

    metadata = {
        "version": __version__,
        "config_hash": config.hash,
        "seed": int(seed),
        "workers": workers,
        "counts": counts,
        "banks": bank_meta,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "mesh": {
            "n_vertices": scene.mesh.n_vertices,
            "n_faces": scene.mesh.n_faces,
        },
    }
    return SimResult(
        irs=irs, ears=ears, received=received, call=call, metadata=metadata
    )


def write_outputs(result: SimResult, outdir, config: SimulationConfig):
    """Write WAV/CSV/metadata per the output spec; returns written paths.

    The separate specular and diffraction channel files carry the configured
    mixing gains, so they sum exactly to the combined file.
    """
    os.makedirs(outdir, exist_ok=True)
    fs = result.irs.sample_rate
    a_r = config.params.specular_gain
    a_d = config.params.diffraction_gain
    written = []

    def _w(name, data):
        path = os.path.join(outdir, name)
        write_wav(path, np.asarray(data).T, fs)
        written.append(path)

    if config.output.wav:
        _w("ir_specular.wav", a_r * result.irs.specular)
        _w("ir_diffraction.wav", a_d * result.irs.diffraction)
        _w("ir_combined.wav", result.irs.combined)
        for name, ir in result.ears.items():
            _w(f"ear_{name}.wav", ir)
        for name, sig in result.received.items():
            _w(f"received_{name}.wav", sig)
        _w("call.wav", result.call.samples)
    if config.output.csv:
        for name, arr in (
            ("ir_specular.csv", a_r * result.irs.specular),
            ("ir_diffraction.csv", a_d * result.irs.diffraction),
            ("ir_combined.csv", result.irs.combined),
        ):
            path = os.path.join(outdir, name)
            write_matrix_csv(path, arr)
            written.append(path)
    if config.output.metadata:
        meta_path = os.path.join(outdir, "metadata.json")
        write_json(meta_path, result.metadata)
        cfg_path = os.path.join(outdir, "effective_config.json")
        write_json(cfg_path, config.effective_dict())
        written.extend([meta_path, cfg_path])
    return written


def verify_config_hash(outdir, config: SimulationConfig) -> dict:
    """Guard re-analysis: refuse outputs produced by a different config.

    Returns the saved metadata when the hash matches.
    """
    meta_path = os.path.join(outdir, "metadata.json")
    with open(meta_path) as fh:
        meta = json.load(fh)
    saved = meta.get("config_hash")
    if saved != config.hash:
        raise ConfigError(
            f"outputs in {outdir} carry config hash {saved}; the supplied "
            f"config hashes to {config.hash}"
        )
    return meta
