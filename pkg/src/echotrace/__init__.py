"""echotrace: sonar echo simulation on triangle meshes.

Specular ray tracing plus Monte-Carlo diffraction produce per-receiver
impulse responses; FIR filter banks fitted to a directivity target turn the
receiver array into ears with arbitrary spatial sensitivity.
"""

from .errors import (
    ConfigError,
    EchotraceError,
    EmptyMeshError,
    GridMismatchError,
    InvalidBandError,
    InvalidMaterialError,
    NoDiffractionCandidatesError,
    OrientationWarning,
    SingularFitError,
    StlParseError,
)
from .stl_io import RawMesh, load_stl, save_stl
from .mesh import Mesh, repair_mesh, transform_points
from .curvature import CurvatureField, estimate_curvature

__version__ = "0.1.0"

from .brdf import BrdfField, MaterialParams, derive_brdf, lobe_profile
from .scene import (
    Pose,
    SensorArray,
    SimParams,
    make_pose,
    partition_sphere_directions,
    transform_sensor,
)
from .spectral import (
    ImpulseResponseSet,
    SpectrumAccumulator,
    TransferSpectrum,
    accumulate,
    band_window,
    combine,
    synthesize_transfer,
    to_time_domain,
)
from .raytrace import (
    BounceChains,
    Contribution,
    ContributionBatch,
    RayBundle,
    generate_rays,
    intersect,
    intersect_batch,
    reflect,
    sample_to_receivers,
    segments_blocked,
    trace_paths,
)
from .diffraction import (
    DiffractionDistribution,
    build_sampling_distribution,
    evaluate_diffraction,
    sample_diffraction_points,
)
from .ertf import (
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
from .signals import (
    BinauralResult,
    EmittedCall,
    convolve,
    filter_ears,
    receive,
    render_binaural,
    synthesize_call,
)
from .config import SimulationConfig, load_config, load_config_dict
from .pipeline import (
    SimResult,
    build_banks,
    prepare_scene,
    run_simulation,
    verify_config_hash,
    write_outputs,
)
from .scans import ScanResult, derive_row_seed, run_rotation_scan, run_sphere_scan

__all__ = [
    "BinauralResult", "BounceChains", "BrdfField", "ConfigError",
    "Contribution", "ContributionBatch", "CurvatureField",
    "DiffractionDistribution", "DirectivityTarget", "EchotraceError",
    "EmittedCall", "EmptyMeshError", "ErtfFilterBank", "GridMismatchError",
    "ImpulseResponseSet", "InvalidBandError", "InvalidMaterialError",
    "MaterialParams", "Mesh", "NoDiffractionCandidatesError",
    "OrientationWarning", "Pose", "RawMesh", "RayBundle", "ScanResult",
    "SensorArray", "SimParams", "SimResult", "SimulationConfig",
    "SingularFitError", "SpectrumAccumulator", "StlParseError",
    "TransferSpectrum", "accumulate", "analytic_target",
    "apply_filter_bank", "band_window", "build_banks",
    "build_sampling_distribution", "combine", "convolve", "derive_brdf",
    "derive_row_seed", "estimate_curvature", "evaluate_diffraction",
    "evaluate_realized_pattern", "filter_ears", "fit_fir_bank",
    "generate_rays", "intersect", "intersect_batch", "load_config",
    "load_config_dict", "load_directivity_csv", "load_filter_bank",
    "load_stl", "lobe_profile", "make_pose", "partition_sphere_directions",
    "prepare_scene", "receive", "reflect", "render_binaural", "repair_mesh",
    "run_rotation_scan", "run_simulation", "run_sphere_scan",
    "sample_diffraction_points", "sample_to_receivers", "save_filter_bank",
    "save_stl", "segments_blocked", "steering_matrix", "synthesize_call",
    "synthesize_transfer", "to_time_domain", "trace_paths",
    "transform_points", "transform_sensor", "verify_config_hash",
    "write_outputs", "__version__",
]
