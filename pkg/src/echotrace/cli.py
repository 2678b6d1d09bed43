"""Command-line front end.

Subcommands: ``simulate``, ``scan-rotation``, ``scan-sphere``, ``fit-ertf``
and ``mesh-info``.  Every run-style command takes ``--config`` plus the
usual overrides (``--seed``, ``--workers``, ``--out``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .brdf import MaterialParams, derive_brdf
from .config import load_config
from .curvature import estimate_curvature
from .ertf import save_filter_bank
from .mesh import repair_mesh
from .pipeline import build_ear_bank, run_simulation, write_outputs
from .scans import run_rotation_scan, run_sphere_scan
from .stl_io import load_stl, mesh_summary


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="TOML or JSON run config")
    p.add_argument("--seed", type=int, default=None,
                   help="override params.seed")
    p.add_argument("--workers", type=int, default=1,
                   help="worker count (results do not depend on it)")
    p.add_argument("--out", default=None,
                   help="override the output directory")


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(
            config, params=dataclasses.replace(config.params, seed=args.seed)
        )
    if getattr(args, "out", None):
        config = dataclasses.replace(
            config, output=dataclasses.replace(
                config.output, directory=args.out
            )
        )
    return config


def _cmd_simulate(args) -> int:
    config = _load(args)
    result = run_simulation(config, workers=args.workers)
    outdir = config.resolve_path(config.output.directory)
    written = write_outputs(result, outdir, config)
    print(json.dumps(result.metadata, indent=2, sort_keys=True))
    print(f"wrote {len(written)} files to {outdir}", file=sys.stderr)
    return 0


def _cmd_scan_rotation(args) -> int:
    config = _load(args)
    result = run_rotation_scan(
        config,
        axis=args.axis,
        start_deg=args.start,
        stop_deg=args.stop,
        step_deg=args.step,
        workers=args.workers,
        seed_mode=args.seed_mode,
    )
    outdir = config.resolve_path(config.output.directory)
    result.save(outdir, spectra=args.spectra, irs=args.irs)
    print(f"{len(result)} rows -> {outdir}")
    return 0


def _cmd_scan_sphere(args) -> int:
    config = _load(args)
    result = run_sphere_scan(
        config,
        n_points=args.points,
        distance=args.distance,
        hemisphere=not args.full_sphere,
        workers=args.workers,
        seed_mode=args.seed_mode,
    )
    outdir = config.resolve_path(config.output.directory)
    result.save(outdir, spectra=args.spectra, irs=args.irs)
    print(f"{len(result)} rows -> {outdir}")
    return 0


def _cmd_fit_ertf(args) -> int:
    config = _load(args)
    if args.ear not in config.ears:
        print(f"no [ears.{args.ear}] section in the config", file=sys.stderr)
        return 2
    bank, residual = build_ear_bank(config, args.ear, config.ears[args.ear])
    save_filter_bank(args.out, bank)
    print(json.dumps({
        "ear": args.ear,
        "n_channels": bank.n_receivers,
        "n_taps": bank.n_taps,
        "sample_rate": bank.sample_rate,
        "fit_residual": residual,
        "path": args.out,
    }, indent=2))
    return 0


def _cmd_mesh_info(args) -> int:
    info = mesh_summary(args.mesh)
    raw = load_stl(args.mesh)
    mesh = repair_mesh(raw, merge_tolerance=args.merge_tolerance)
    curv = estimate_curvature(mesh)
    hist, edges = np.histogram(curv.face_curvature, bins=16)
    freqs = np.asarray(args.frequencies, dtype=np.float64)
    brdf = derive_brdf(curv, freqs, MaterialParams())
    lobe = brdf.lobe_width()
    gain = brdf.reflection_gain()
    info.update({
        "raw_vertices": int(len(raw.vertices)),
        "repaired_vertices": mesh.n_vertices,
        "repaired_faces": mesh.n_faces,
        "total_area": float(mesh.face_areas.sum()),
        "curvature_histogram": {
            "counts": hist.tolist(),
            "bin_edges": edges.tolist(),
        },
        "face_curvature_quantiles": {
            q: float(np.quantile(curv.face_curvature, float(q)))
            for q in ("0.05", "0.25", "0.5", "0.75", "0.95")
        },
        "reflection_model": {
            "frequencies_hz": freqs.tolist(),
            "lobe_width_deg_min": float(np.degrees(lobe.min())),
            "lobe_width_deg_max": float(np.degrees(lobe.max())),
            "gain_min": float(gain.min()),
            "gain_max": float(gain.max()),
        },
    })
    text = json.dumps(info, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echotrace",
        description="Sonar echo simulation on triangle meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scene and write outputs")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("scan-rotation", help="rotate the object in place")
    _add_common(p)
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--start", type=float, default=-90.0)
    p.add_argument("--stop", type=float, default=90.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--seed-mode", choices=("common", "independent"),
                   default="common",
                   help="share the master seed across rows or derive one "
                        "per row")
    p.add_argument("--spectra", action="store_true",
                   help="also write spectra.csv")
    p.add_argument("--irs", action="store_true", help="also write ir.csv")
    p.set_defaults(func=_cmd_scan_rotation)

    p = sub.add_parser("scan-sphere", help="move the object around the sensor")
    _add_common(p)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--distance", type=float, default=1.0)
    p.add_argument("--full-sphere", action="store_true",
                   help="cover the full sphere instead of the frontal half")
    p.add_argument("--seed-mode", choices=("common", "independent"),
                   default="common",
                   help="share the master seed across rows or derive one "
                        "per row")
    p.add_argument("--spectra", action="store_true",
                   help="also write spectra.csv")
    p.add_argument("--irs", action="store_true", help="also write ir.csv")
    p.set_defaults(func=_cmd_scan_sphere)

    p = sub.add_parser("fit-ertf", help="fit a filter bank and save it")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--ear", default="left")
    p.add_argument("--out", required=True, help="output bank file")
    p.set_defaults(func=_cmd_fit_ertf)

    p = sub.add_parser("mesh-info", help="inspect an STL file")
    p.add_argument("--mesh", required=True)
    p.add_argument("--merge-tolerance", type=float, default=1e-6)
    p.add_argument("--frequencies", type=float, nargs="+",
                   default=[40_000.0, 80_000.0],
                   help="frequencies (Hz) at which to report the "
                        "reflection-model parameter ranges")
    p.add_argument("--out", default=None, help="also write JSON here")
    p.set_defaults(func=_cmd_mesh_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
