"""Simulation and parameter-estimation toolkit for single-atom fluorescence
observed through an optical nanofiber."""

from .core import (
    AtomParams,
    ConfigError,
    DegenerateFitError,
    DomainError,
    DriveParams,
    FiberAtomError,
    Histogram,
    IntegrationError,
    NoPeakError,
    NumericalError,
    Spectrum,
    angular,
    ordinary,
    rabi_from_intensity,
)
from .bloch import (
    BlochTrajectory,
    DensityMatrix3,
    TwoLevelState,
    VTypeScheme,
    dip_metrics,
    excitation_spectrum,
    spectral_fwhm,
    two_level_evolve,
    two_level_steady,
    vtype_steady,
)
from .correlations import (
    CoincidenceModel,
    G2Curve,
    dominant_oscillation,
    g2_curve,
    n_atom_model,
)
from .montecarlo import (
    DecayScan,
    DetectorConfig,
    GatingConfig,
    OccupancyModel,
    PhotonStream,
    apply_occupancy_and_gating,
    cross_correlate,
    decay_scan,
    mc_excited_population,
    simulate_emission,
    split_and_detect,
)
from .vdw import (
    DistanceDistribution,
    VdwConfig,
    distance_for_shift,
    surface_line_shape,
    vdw_shift,
)
from .orbit import (
    OrbitParams,
    OrbitSolution,
    effective_potential,
    frequency_radius_scaling,
    radius_from_frequency,
    stationary_orbit,
)
from .analysis import (
    FitResult,
    GeometryConfig,
    fit_coincidences,
    fit_exponential,
    fit_vtype_spectrum,
    localized_atom_count,
    mean_atom_number,
    transit_time,
)

__version__ = "0.1.0"
