"""Two-phase variational image segmentation with a convergence lab.

A diffuse-interface segmentation engine (alternating minimization of a
phase-field energy with per-phase smooth or constant fits) together with the
measurement kit that witnesses its sharp-interface limit numerically:
interface-energy studies, diffuse-vs-sharp energy gaps along ladders,
optimal-transport distances between segmentation states, and boundary-collar
volume checks.
"""

from ._accel import NUMBA_ENV, USE_NUMBA
from .energy import (
    EnergyBreakdown,
    EnergyParams,
    MU_INF,
    Measures,
    at_energy,
    gl_energy,
    hajlasz_pair_check,
    limit_energy,
    measures_from,
    pc_energy_eps,
    pc_limit_energy,
    sobolev_seminorm_proxy,
)
from .errors import (
    CgDivergenceError,
    DegenerateSetError,
    GammaSegError,
    NoProgressError,
    NonStationarityError,
    QuadratureError,
    ShapeMismatchError,
    TruncatedFileError,
    UnsupportedFormatError,
    ZeroMeasureError,
)
from .fileio import load_image, save_mask, write_report, write_rows
from .gammalab import (
    GammaReport,
    GammaRow,
    MinkRow,
    MmRow,
    MuRow,
    MuRule,
    PcReport,
    PcRow,
    SweepPlan,
    epsilon_sweep,
    minkowski_study,
    modica_mortola_1d,
    mu_sweep,
    pc_gamma_check,
    replicate_sweeps,
)
from .grid import (
    Grid,
    IndicatorField,
    MultiField,
    ScalarField,
    boundary_faces,
    distance_to_boundary,
    gradient_forward,
    minkowski_volume,
    perimeter_density_check,
    signed_distance,
    threshold_half,
    tv_isotropic,
)
from .potential import (
    DoubleWell,
    builtin_well,
    compute_cw,
    make_quartic,
    make_sine,
    scale_well,
    validate_assumption,
)
from .solver import (
    Mollifier,
    SegmentationState,
    SolverConfig,
    fit_constants,
    fit_smooth_fields,
    minimize,
    optimal_profile,
    recovery_sequence,
    update_v_step,
)
from .transport import (
    Coupling,
    DiscreteMeasure,
    PairedSample,
    TlpResult,
    barycentric_map,
    clp_distance,
    clp_equivalent,
    map_coupling,
    pushforward,
    stagnation_cost,
    tlp_distance,
)

__version__ = "0.1.0"
