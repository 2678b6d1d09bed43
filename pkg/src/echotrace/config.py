"""Run configuration: TOML or JSON files with identical structure.

A file describes the scene (mesh, material, poses), the sensor array, the
global simulation parameters, the emitted call, optional per-ear
directivity specs and output options.  Loading validates everything and
resolves defaults, so the effective configuration can be dumped and hashed
for provenance.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .brdf import MaterialParams
from .errors import ConfigError
from .io import config_hash
from .scene import Pose, SensorArray, SimParams, make_pose


@dataclass
class MeshSpec:
    path: str
    scale: float = 1.0
    merge_tolerance: float = 1e-6
    pose: Pose = dc_field(default_factory=Pose)
    material: MaterialParams = dc_field(default_factory=MaterialParams)
    smooth_normals: bool = False


@dataclass
class CallSpec:
    kind: str = "linear"
    f_start: float = 80_000.0
    f_end: float = 40_000.0
    duration: float = 0.003
    window: str | None = "tukey"
    window_param: float = 0.25


@dataclass
class EarSpec:
    """How one ear's filter bank comes to be.

    ``kind``: ``omni`` / ``cardioid`` / ``cosine`` fit an analytic target,
    ``csv`` fits an imported measured pattern, ``file`` loads a previously
    saved bank, ``impulse`` uses a pass-through unit filter on the first
    receiver of the group.
    """

    kind: str = "impulse"
    path: str | None = None       # bank file or CSV, depending on kind
    axis: tuple = (1.0, 0.0, 0.0)
    order: float = 1.0
    n_taps: int = 128
    ridge: float = 1e-6
    group_delay: float | None = None  # defaults to n_taps / 2 for fits
    fit_directions: int = 256
    fit_hemisphere: bool = True
    fit_freqs: int = 12           # count of design frequencies in band


@dataclass
class OutputSpec:
    directory: str = "out"
    wav: bool = True
    csv: bool = False
    metadata: bool = True


@dataclass
class SimulationConfig:
    mesh: MeshSpec
    sensor: SensorArray
    sensor_pose: Pose
    params: SimParams
    call: CallSpec
    ears: dict  # name -> EarSpec, typically {"left", "right"}
    output: OutputSpec
    base_dir: str = "."

    def resolve_path(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def effective_dict(self) -> dict:
        d = {
            "mesh": {
                "path": self.resolve_path(self.mesh.path),
                "scale": self.mesh.scale,
                "merge_tolerance": self.mesh.merge_tolerance,
                "pose": _pose_dict(self.mesh.pose),
                "smooth_normals": self.mesh.smooth_normals,
                "material": {
                    "lobe_min_deg": float(np.rad2deg(self.mesh.material.lobe_min)),
                    "lobe_max_deg": float(np.rad2deg(self.mesh.material.lobe_max)),
                    "gain_min": self.mesh.material.gain_min,
                    "gain_max": self.mesh.material.gain_max,
                    "curvature_scale": self.mesh.material.curvature_scale,
                },
            },
            "sensor": {
                "emitter": self.sensor.emitter.tolist(),
                "receivers": self.sensor.receivers.tolist(),
                "groups": {
                    k: np.asarray(v).tolist()
                    for k, v in self.sensor.groups.items()
                },
                "pose": _pose_dict(self.sensor_pose),
            },
            "params": {
                "speed_of_sound": self.params.speed_of_sound,
                "sample_rate": self.params.sample_rate,
                "ir_length": self.params.ir_length,
                "n_rays": self.params.n_rays,
                "max_bounces": self.params.max_bounces,
                "n_diffraction": self.params.n_diffraction,
                "specular_gain": self.params.specular_gain,
                "diffraction_gain": self.params.diffraction_gain,
                "seed": self.params.seed,
                "band": list(self.params.band) if self.params.band else None,
                "band_transition": self.params.band_transition,
                "band_edges": self.params.band_edges,
                "curvature_quantile": self.params.curvature_quantile,
                "curvature_threshold": self.params.curvature_threshold,
                "ray_jitter": self.params.ray_jitter,
                "normalize_rays": self.params.normalize_rays,
            },
            "call": {
                "kind": self.call.kind,
                "f_start": self.call.f_start,
                "f_end": self.call.f_end,
                "duration": self.call.duration,
                "window": self.call.window,
                "window_param": self.call.window_param,
            },
            "ears": {
                name: {
                    "kind": e.kind,
                    "path": (
                        None if e.path is None else self.resolve_path(e.path)
                    ),
                    "axis": list(e.axis),
                    "order": e.order,
                    "n_taps": e.n_taps,
                    "ridge": e.ridge,
                    "group_delay": e.group_delay,
                    "fit_directions": e.fit_directions,
                    "fit_hemisphere": e.fit_hemisphere,
                    "fit_freqs": e.fit_freqs,
                }
                for name, e in self.ears.items()
            },
            "output": {
                "directory": self.output.directory,
                "wav": self.output.wav,
                "csv": self.output.csv,
                "metadata": self.output.metadata,
            },
        }
        return d

    @property
    def hash(self) -> str:
        return config_hash(self.effective_dict())


def _pose_dict(pose: Pose) -> dict:
    return {
        "translation": list(pose.translation),
        "rotation_deg": [float(np.rad2deg(a)) for a in pose.rotation],
    }


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r} in [{where}]")
    return section[key]


def _take(section: dict, where: str, **defaults):
    """Pop known keys with defaults; reject unknown leftovers."""
    out = {}
    for key, default in defaults.items():
        out[key] = section.pop(key, default)
    if section:
        raise ConfigError(
            f"unknown keys in [{where}]: {sorted(section.keys())}"
        )
    return out


def _parse_pose(d: dict, where: str) -> Pose:
    vals = _take(dict(d), where, translation=(0.0, 0.0, 0.0),
                 rotation_deg=(0.0, 0.0, 0.0))
    return make_pose(vals["translation"], vals["rotation_deg"])


def load_config_dict(data: dict, base_dir: str = ".") -> SimulationConfig:
    data = {k: v for k, v in data.items()}
    known = {"mesh", "sensor", "params", "call", "ears", "output"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level sections: {sorted(unknown)}")

    mesh_d = dict(data.get("mesh") or {})
    if "path" not in mesh_d:
        raise ConfigError("missing required key 'path' in [mesh]")
    mat_d = _take(dict(mesh_d.pop("material", {})), "mesh.material",
                  lobe_min_deg=5.0, lobe_max_deg=150.0,
                  gain_min=0.05, gain_max=1.0, curvature_scale=1.0)
    material = MaterialParams(
        lobe_min=float(np.deg2rad(mat_d["lobe_min_deg"])),
        lobe_max=float(np.deg2rad(mat_d["lobe_max_deg"])),
        gain_min=float(mat_d["gain_min"]),
        gain_max=float(mat_d["gain_max"]),
        curvature_scale=float(mat_d["curvature_scale"]),
    ).validate()
    pose = _parse_pose(mesh_d.pop("pose", {}), "mesh.pose")
    mesh_v = _take(mesh_d, "mesh", path=None, scale=1.0,
                   merge_tolerance=1e-6, smooth_normals=False)
    mesh = MeshSpec(
        path=str(mesh_v["path"]),
        scale=float(mesh_v["scale"]),
        merge_tolerance=float(mesh_v["merge_tolerance"]),
        pose=pose,
        material=material,
        smooth_normals=bool(mesh_v["smooth_normals"]),
    )

    sensor_d = dict(data.get("sensor") or {})
    sensor_pose = _parse_pose(sensor_d.pop("pose", {}), "sensor.pose")
    groups = sensor_d.pop("groups", {})
    sensor_v = _take(sensor_d, "sensor", emitter=(0.0, 0.0, 0.0),
                     receivers=None)
    if sensor_v["receivers"] is None:
        raise ConfigError("missing required key 'receivers' in [sensor]")
    try:
        sensor = SensorArray(
            emitter=sensor_v["emitter"],
            receivers=sensor_v["receivers"],
            groups={k: list(v) for k, v in dict(groups).items()},
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [sensor]: {exc}") from exc

    params_d = dict(data.get("params") or {})
    band = params_d.pop("band", None)
    defaults = SimParams()
    params_v = _take(
        params_d, "params",
        speed_of_sound=defaults.speed_of_sound,
        sample_rate=defaults.sample_rate,
        ir_length=defaults.ir_length,
        n_rays=defaults.n_rays,
        max_bounces=defaults.max_bounces,
        n_diffraction=defaults.n_diffraction,
        specular_gain=defaults.specular_gain,
        diffraction_gain=defaults.diffraction_gain,
        seed=defaults.seed,
        band_transition=defaults.band_transition,
        band_edges=defaults.band_edges,
        curvature_quantile=defaults.curvature_quantile,
        curvature_threshold=defaults.curvature_threshold,
        ray_jitter=defaults.ray_jitter,
        normalize_rays=defaults.normalize_rays,
    )
    try:
        params = SimParams(
            speed_of_sound=float(params_v["speed_of_sound"]),
            sample_rate=float(params_v["sample_rate"]),
            ir_length=int(params_v["ir_length"]),
            n_rays=int(params_v["n_rays"]),
            max_bounces=int(params_v["max_bounces"]),
            n_diffraction=int(params_v["n_diffraction"]),
            specular_gain=float(params_v["specular_gain"]),
            diffraction_gain=float(params_v["diffraction_gain"]),
            seed=int(params_v["seed"]),
            band=tuple(float(b) for b in band) if band else None,
            band_transition=float(params_v["band_transition"]),
            band_edges=bool(params_v["band_edges"]),
            curvature_quantile=float(params_v["curvature_quantile"]),
            curvature_threshold=(
                None if params_v["curvature_threshold"] is None
                else float(params_v["curvature_threshold"])
            ),
            ray_jitter=bool(params_v["ray_jitter"]),
            normalize_rays=bool(params_v["normalize_rays"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [params]: {exc}") from exc

    call_v = _take(dict(data.get("call") or {}), "call",
                   kind="linear", f_start=80_000.0, f_end=40_000.0,
                   duration=0.003, window="tukey", window_param=0.25)
    call = CallSpec(
        kind=str(call_v["kind"]),
        f_start=float(call_v["f_start"]),
        f_end=float(call_v["f_end"]),
        duration=float(call_v["duration"]),
        window=call_v["window"],
        window_param=float(call_v["window_param"]),
    )

    ears = {}
    for name, ear_d in dict(data.get("ears") or {}).items():
        v = _take(dict(ear_d), f"ears.{name}",
                  kind="impulse", path=None, axis=(1.0, 0.0, 0.0),
                  order=1.0, n_taps=128, ridge=1e-6, group_delay=None,
                  fit_directions=256, fit_hemisphere=True, fit_freqs=12)
        kind = str(v["kind"])
        if kind not in ("impulse", "omni", "cardioid", "cosine", "csv", "file"):
            raise ConfigError(f"unknown ear kind {kind!r} for {name!r}")
        if kind in ("csv", "file") and not v["path"]:
            raise ConfigError(f"ear {name!r} of kind {kind!r} needs a path")
        ears[name] = EarSpec(
            kind=kind,
            path=v["path"],
            axis=tuple(float(a) for a in v["axis"]),
            order=float(v["order"]),
            n_taps=int(v["n_taps"]),
            ridge=float(v["ridge"]),
            group_delay=(
                None if v["group_delay"] is None else float(v["group_delay"])
            ),
            fit_directions=int(v["fit_directions"]),
            fit_hemisphere=bool(v["fit_hemisphere"]),
            fit_freqs=int(v["fit_freqs"]),
        )

    out_v = _take(dict(data.get("output") or {}), "output",
                  directory="out", wav=True, csv=False, metadata=True)
    output = OutputSpec(
        directory=str(out_v["directory"]),
        wav=bool(out_v["wav"]),
        csv=bool(out_v["csv"]),
        metadata=bool(out_v["metadata"]),
    )

    config = SimulationConfig(
        mesh=mesh,
        sensor=sensor,
        sensor_pose=sensor_pose,
        params=params,
        call=call,
        ears=ears,
        output=output,
        base_dir=base_dir,
    )
    _check_referenced_files(config)
    return config


def _check_referenced_files(config: SimulationConfig):
    """Every file named by the config must exist when it is loaded."""
    missing = []
    if not os.path.isfile(config.resolve_path(config.mesh.path)):
        missing.append(("mesh.path", config.mesh.path))
    for name, ear in config.ears.items():
        if ear.path is not None and not os.path.isfile(
            config.resolve_path(ear.path)
        ):
            missing.append((f"ears.{name}.path", ear.path))
    if missing:
        detail = ", ".join(f"{key} -> {val!r}" for key, val in missing)
        raise ConfigError(f"referenced files do not exist: {detail}")


def load_config(path) -> SimulationConfig:
    """Read TOML or JSON (chosen by extension, with a sniffing fallback)."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    ext = os.path.splitext(path)[1].lower()
    if ext == ".json" or (ext != ".toml" and blob.lstrip()[:1] == b"{"):
        try:
            data = json.loads(blob)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    else:
        try:
            data = tomllib.loads(blob.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return load_config_dict(data, base_dir=os.path.dirname(path) or ".")
