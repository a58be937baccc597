"""Multiple-scattering in-line holography: simulation and sparse inversion.

The package models coherent light scattered up to K times inside a
discretized particle volume, synthesizes the resulting single-shot in-line
hologram, and inverts such holograms into sparse 3D contrast volumes with a
TV-regularized proximal-gradient solver whose gradient accounts for the
full K-order field recursion.
"""

from .errors import (
    BornHoloError,
    ConfigError,
    DegenerateTruth,
    DimensionMismatch,
    GridTooLarge,
    InvalidNA,
    KernelAllocationError,
    NonPositiveDimension,
    PackingFailure,
    SamplingViolation,
    ZeroIncidentField,
    ZeroMeanHologram,
)
from .grid import (
    Hologram2D,
    InternalField,
    ObjectVolume,
    PhysicalGrid,
    ScatteredField2D,
    axial_resolution,
    contrast_from_index,
    incident_at_hologram,
    incident_plane_wave,
    make_grid,
)
from .propagation import (
    PropagationKernels,
    apply_G,
    apply_G_adjoint,
    apply_H,
    apply_H_adjoint,
    build_kernels,
    get_fft_workers,
    na_lowpass,
    set_fft_workers,
)
from .forward import (
    ForwardConfig,
    backscatter_difference,
    backscatter_fraction,
    born_series,
    extract_scattered,
    internal_field,
    scattered_field,
    synthesize_hologram,
)
from .solver import (
    SolverConfig,
    SolverState,
    bpm_reconstruct,
    calibrate_tau,
    data_fidelity,
    estimate_alpha0,
    gradient,
    reconstruct,
    tv_prox,
    tv_value,
)
from .phantom_analysis import (
    ConvergenceReport,
    DetectedParticles,
    MatchResult,
    ParticleSet,
    PhantomSpec,
    contrast_ratio,
    convergence_metric,
    count_particles,
    depth_binned_recall,
    generate_phantom,
    geometric_density,
    match_particles,
    particles_for_density,
    rasterize_particles,
    snr_db,
)
from .fileio import (
    load_config,
    load_kernels,
    read_cost_history,
    read_volume,
    save_kernels,
    validate_config,
    verify_manifest,
    write_cost_history,
    write_manifest,
    write_volume,
)

__version__ = "0.1.0"
