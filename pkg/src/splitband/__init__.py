"""Spectral gaps of two strips coupled through small periodic windows."""

from __future__ import annotations

__version__ = "0.1.0"

from .analytic import (
    BandCrossing,
    GapForecast,
    ModeIndex,
    WaveguideGeometry,
    corollary_region_check,
    correction_extrema,
    correction_roots,
    coupling_matrix,
    count_bands_containing,
    find_crossings,
    forecast_gap,
    identity_residuals,
    inner_profile,
    mode_amplitudes,
    mu_corrections,
    perturbed_band_asymptote,
    unperturbed_eigenvalue,
)
from .config import ConfigError, RunConfig, from_dict, parse_config
from .explorer import (
    BandDiagram,
    BandSolver,
    EpsilonStudy,
    GapRecord,
    detect_gaps,
    epsilon_study,
    fit_inverse_log,
    k_grid,
    refine_extremum,
    sweep,
    verify_shift_bound,
)
from .mesh import CellMesh, MeshConfig, build_mesh
from .solver import (
    EigenSolveError,
    assemble,
    convergence_study,
    open_window_spectrum,
    reference_spectrum,
    solve_lowest,
)
from .cli import RunManifest, run_pipeline
from .io import emit_csv, emit_svg_band_diagram

__all__ = [
    "__version__",
    "BandCrossing",
    "GapForecast",
    "ModeIndex",
    "WaveguideGeometry",
    "corollary_region_check",
    "correction_extrema",
    "correction_roots",
    "coupling_matrix",
    "count_bands_containing",
    "find_crossings",
    "forecast_gap",
    "identity_residuals",
    "inner_profile",
    "mode_amplitudes",
    "mu_corrections",
    "perturbed_band_asymptote",
    "unperturbed_eigenvalue",
    "ConfigError",
    "RunConfig",
    "from_dict",
    "parse_config",
    "BandDiagram",
    "BandSolver",
    "EpsilonStudy",
    "GapRecord",
    "detect_gaps",
    "epsilon_study",
    "fit_inverse_log",
    "k_grid",
    "refine_extremum",
    "sweep",
    "verify_shift_bound",
    "CellMesh",
    "MeshConfig",
    "build_mesh",
    "EigenSolveError",
    "assemble",
    "convergence_study",
    "open_window_spectrum",
    "reference_spectrum",
    "solve_lowest",
    "RunManifest",
    "run_pipeline",
    "emit_csv",
    "emit_svg_band_diagram",
]
