"""Scan drivers: rotate an object in place, or walk it around the sensor.

Both produce per-position ear impulse responses, band energies, magnitude
spectra and target strength in dB relative to a one-square-metre reference
plate simulated with the same sampling setup.  Every row is a standalone
simulation that can be reproduced bit for bit from its recorded seed; the
worker pool only changes scheduling, never results.  Rows share the master
seed by default (common random numbers), so differences between positions
reflect geometry rather than resampled Monte-Carlo noise; pass
``seed_mode='independent'`` to derive a fresh seed per row instead.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SimulationConfig
from .ertf import analytic_target, evaluate_realized_pattern
from .io import write_json, write_matrix_csv
from .pipeline import (
    _design_freqs,
    _ear_group,
    _subarray,
    build_banks,
    run_simulation,
)
from .primitives import plate
from .scene import partition_sphere_directions, rotation_x, rotation_y, rotation_z
from .stl_io import RawMesh, load_stl

_ROT = {"x": rotation_x, "y": rotation_y, "z": rotation_z}


@dataclass
class ScanResult:
    kind: str                 # "rotation" or "sphere"
    positions: np.ndarray     # (n,) angles in degrees, or (n, 3) directions
    channel: str              # ear name the scan observed
    irs: np.ndarray           # (n, t) ear impulse responses
    energies: np.ndarray      # (n,) sum of squares per row
    target_strength: np.ndarray  # (n,) dB re the reference plate
    spectra: np.ndarray       # (n, n_f) magnitude spectra of the rows
    row_seeds: list = field(default_factory=list)
    reference_energy: float = 0.0
    desired_pattern: np.ndarray | None = None   # (n,) |target gain|^2
    realized_pattern: np.ndarray | None = None  # (n,) |bank response|^2
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.positions)

    def _position_block(self) -> tuple[np.ndarray, str]:
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim == 1:
            return pos[:, None], "angle_deg"
        return pos, ",".join(f"dir_{ax}" for ax in "xyz"[: pos.shape[1]])

    def save(self, outdir, spectra: bool = False, irs: bool = False):
        """Write CSV matrices whose rows start with the scan position."""
        os.makedirs(outdir, exist_ok=True)
        pos, labels = self._position_block()
        cols = [pos, self.energies[:, None], self.target_strength[:, None]]
        header = f"{labels},energy,target_strength_db"
        if self.desired_pattern is not None:
            cols.append(self.desired_pattern[:, None])
            header += ",desired_pattern"
        if self.realized_pattern is not None:
            cols.append(self.realized_pattern[:, None])
            header += ",realized_pattern"
        write_matrix_csv(
            os.path.join(outdir, "energy.csv"), np.hstack(cols), header
        )
        if spectra:
            n_f = self.spectra.shape[1]
            write_matrix_csv(
                os.path.join(outdir, "spectra.csv"),
                np.hstack([pos, self.spectra]),
                labels + "," + ",".join(f"f{j}" for j in range(n_f)),
            )
        if irs:
            n_t = self.irs.shape[1]
            write_matrix_csv(
                os.path.join(outdir, "ir.csv"),
                np.hstack([pos, self.irs]),
                labels + "," + ",".join(f"s{j}" for j in range(n_t)),
            )
        write_json(
            os.path.join(outdir, "index.json"),
            {
                "kind": self.kind,
                "channel": self.channel,
                "rows": len(self),
                "row_seeds": [str(s) for s in self.row_seeds],
                "reference_energy": self.reference_energy,
                **self.metadata,
            },
        )


def derive_row_seed(master_seed: int, index: int) -> int:
    """Independent per-row seed; stable across worker counts and runs."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int.from_bytes(ss.generate_state(4, np.uint32).tobytes(), "little")


def _row_seeds(master_seed: int, n: int, mode: str) -> list:
    """Common random numbers by default: every row reuses the master seed,
    so position-to-position differences reflect geometry instead of fresh
    Monte-Carlo noise.  ``independent`` derives a separate seed per row for
    honest error bars across repeats."""
    if mode == "common":
        return [int(master_seed)] * n
    if mode == "independent":
        return [derive_row_seed(master_seed, i) for i in range(n)]
    raise ValueError("seed_mode must be 'common' or 'independent'")


def _align_x_to(direction: np.ndarray) -> np.ndarray:
    """Rotation matrix taking +x to ``direction`` (minimal rotation)."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    x = np.array([1.0, 0.0, 0.0])
    c = float(d[0])
    if c < -1.0 + 1e-12:
        return np.diag([-1.0, -1.0, 1.0])  # 180 degrees about z
    axis = np.cross(x, d)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + k + k @ k / (1.0 + c)


def _scan_row(job) -> tuple:
    (index, config, raw_vertices, raw_faces, pose_matrix, seed, banks,
     channel) = job
    raw = RawMesh(raw_vertices, raw_faces)
    result = run_simulation(
        config,
        banks=banks,
        raw_mesh=raw,
        mesh_pose_matrix=pose_matrix,
        seed=seed,
    )
    return index, result.ears[channel]


def _run_rows(jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_row, jobs, chunksize=4))
    else:
        results = [_scan_row(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    return np.asarray([r[1] for r in results])


def _scan_channel(config: SimulationConfig) -> str:
    if not config.ears:
        raise ValueError(
            "scans need at least one configured ear; add an [ears.<name>] "
            "section (kind = 'impulse' observes the group's first receiver)"
        )
    return sorted(config.ears.keys())[0]


def reference_plate_energy(
    config: SimulationConfig,
    distance: float,
    banks: dict,
    channel: str,
) -> float:
    """Band energy returned by a 1 m^2 flat plate facing the sensor at the
    scan range, traced specularly with the same sampling parameters."""
    import dataclasses

    verts, faces = plate(1.0, 1.0)
    params = dataclasses.replace(
        config.params, n_diffraction=0, specular_gain=1.0, diffraction_gain=0.0
    )
    ref_config = dataclasses.replace(config, params=params)
    pose = np.eye(4)
    pose[:3, 3] = config.sensor_pose.matrix[:3, :3] @ np.array(
        [distance, 0.0, 0.0]
    ) + config.sensor_pose.matrix[:3, 3]
    pose[:3, :3] = config.sensor_pose.matrix[:3, :3]
    result = run_simulation(
        ref_config,
        banks=banks,
        raw_mesh=RawMesh(verts, faces),
        mesh_pose_matrix=pose,
        seed=config.params.seed,
    )
    return float(np.sum(result.ears[channel] ** 2))


def _finish(kind, positions, irs, config, banks, channel, distance, seeds,
            extra) -> ScanResult:
    energies = np.sum(irs**2, axis=1)
    n_fft = config.params.ir_length
    while n_fft < irs.shape[1]:
        n_fft *= 2
    spectra = np.abs(np.fft.rfft(irs, n=n_fft, axis=1))
    ref = reference_plate_energy(config, distance, banks, channel)
    with np.errstate(divide="ignore"):
        ts = 10.0 * np.log10(energies / ref)
    return ScanResult(
        kind=kind,
        positions=positions,
        channel=channel,
        irs=irs,
        energies=energies,
        target_strength=ts,
        spectra=spectra,
        row_seeds=list(seeds),
        reference_energy=ref,
        metadata={"config_hash": config.hash, **extra},
    )


def run_rotation_scan(
    config: SimulationConfig,
    axis: str = "z",
    start_deg: float = -90.0,
    stop_deg: float = 90.0,
    step_deg: float = 1.0,
    workers: int = 1,
    raw_mesh: RawMesh | None = None,
    seed_mode: str = "common",
) -> ScanResult:
    """Spin the object about a world axis through its pose anchor.

    Angles run from start to stop inclusive.  Each row recomputes the full
    pipeline at the rotated pose; rows share the master seed unless
    ``seed_mode='independent'``.
    """
    if axis not in _ROT:
        raise ValueError(f"axis must be one of {sorted(_ROT)}")
    if step_deg <= 0:
        raise ValueError("step_deg must be positive")
    angles = np.arange(start_deg, stop_deg + step_deg / 2.0, step_deg)
    if raw_mesh is None:
        raw_mesh = load_stl(config.resolve_path(config.mesh.path))
    banks = build_banks(config)
    channel = _scan_channel(config)

    base = config.mesh.pose.matrix
    anchor = base[:3, 3]
    seeds = _row_seeds(config.params.seed, len(angles), seed_mode)
    jobs = []
    for i, ang in enumerate(angles):
        rot = np.eye(4)
        rot[:3, :3] = _ROT[axis](np.deg2rad(ang))
        pose = base.copy()
        pose[:3, 3] = 0.0
        pose = rot @ pose
        pose[:3, 3] += anchor
        jobs.append(
            (i, config, raw_mesh.vertices, raw_mesh.faces, pose, seeds[i],
             banks, channel)
        )
    irs = _run_rows(jobs, workers)
    return _finish(
        "rotation", angles, irs, config, banks, channel,
        float(np.linalg.norm(anchor)), seeds,
        {"axis": axis, "step_deg": step_deg, "seed_mode": seed_mode},
    )


def run_sphere_scan(
    config: SimulationConfig,
    n_points: int = 1000,
    distance: float = 1.0,
    hemisphere: bool = True,
    workers: int = 1,
    raw_mesh: RawMesh | None = None,
    seed_mode: str = "common",
) -> ScanResult:
    """Carry the object around the sensor at equal-area directions.

    This maps the sensor's directional response: the object acts as a rigid
    probe, rotated about the sensor origin so it presents the same aspect at
    every direction (directions are sensor-frame, boresight +x).  The
    configured pose rotation sets the aspect at boresight; its translation is
    ignored.  With the default common seed, rows differ only by geometry, not
    by fresh Monte-Carlo noise.
    """
    directions = partition_sphere_directions(n_points, hemisphere=hemisphere)
    if raw_mesh is None:
        raw_mesh = load_stl(config.resolve_path(config.mesh.path))
    banks = build_banks(config)
    channel = _scan_channel(config)

    sensor_r = config.sensor_pose.matrix[:3, :3]
    sensor_t = config.sensor_pose.matrix[:3, 3]
    base_r = config.mesh.pose.matrix[:3, :3]
    seeds = _row_seeds(config.params.seed, len(directions), seed_mode)
    jobs = []
    for i, d in enumerate(directions):
        pose = np.eye(4)
        pose[:3, :3] = sensor_r @ _align_x_to(d) @ sensor_r.T @ base_r
        pose[:3, 3] = sensor_r @ (distance * d) + sensor_t
        jobs.append(
            (i, config, raw_mesh.vertices, raw_mesh.faces, pose, seeds[i],
             banks, channel)
        )
    irs = _run_rows(jobs, workers)
    result = _finish(
        "sphere", directions, irs, config, banks, channel, distance, seeds,
        {"hemisphere": hemisphere, "distance": distance,
         "seed_mode": seed_mode},
    )
    result.desired_pattern, result.realized_pattern = _direction_patterns(
        config, banks, channel, directions
    )
    return result


def _direction_patterns(config, banks, channel, directions):
    """Per-direction squared target gain (analytic ears) and squared bank
    response, averaged over the design frequencies, for comparison against
    the scanned energy map."""
    spec = config.ears[channel]
    freqs = _design_freqs(config.params, spec.fit_freqs)
    sub = _subarray(config, _ear_group(config, channel))
    bank, _ = banks[channel]
    realized = evaluate_realized_pattern(
        bank, sub, directions, freqs,
        speed_of_sound=config.params.speed_of_sound,
    )
    realized_sq = np.mean(np.abs(realized) ** 2, axis=0)
    desired_sq = None
    if spec.kind in ("omni", "cardioid", "cosine"):
        target = analytic_target(
            spec.kind, directions, freqs, axis=spec.axis, order=spec.order
        )
        desired_sq = np.mean(np.abs(target.gains) ** 2, axis=0)
    return desired_sq, realized_sq
