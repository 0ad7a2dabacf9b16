"""Source localization and signal recovery for the graph wave equation."""

from .adjoint import AdjointSystem, SturmBasis, assemble, project
from .errors import (
    GraphValidationError,
    IntegrationError,
    LocalizationError,
    PlacementError,
    RankDeficiencyError,
    ReconstructionError,
    SingularSystemError,
    SpectrumError,
    WaveSourceError,
    WindowError,
)
from .final_state import FinalStateEstimate, FitWindow, build_design_matrix, estimate_final_state, reconstruct_tail
from .forward import (
    SimulationConfig,
    SourceSpec,
    Trajectory,
    add_noise,
    eval_phi,
    homogeneous_solution,
    simulate_modal,
    simulate_rk,
)
from .graph import (
    LaplacianSpectrum,
    NetworkGraph,
    build_laplacian,
    check_identifiability_condition3,
    find_joints,
    is_strategic_set,
    load_topology,
    spectral_decompose,
)
from .localize import LocalizationResult, ReducedSolve, localize, localize_multi, solve_reduced
from .reconstruct import (
    ReconstructedSignal,
    deconvolve,
    fourier_reconstruct,
    reconstruct_by_deconvolution,
    relative_error,
)
from .signals import GaussianSum, HalfSine, SignalSpec, Tabulated, TanhPulse, ZeroSignal, signal_from_dict

__version__ = "0.1.0"
