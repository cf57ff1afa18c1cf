"""Semiclassical tight-binding reduction of the periodic stationary NLSE.

Pipeline: periodic potential -> Floquet bands -> real localized first-band
basis -> lattice parameters (hopping, interaction, effective nonlinearity)
-> discrete NLS branches -> continuum reconstruction and cross checks.
"""

from .errors import (
    BasisError,
    ConfigError,
    Error,
    GaugeError,
    NonConvergenceError,
    PotentialError,
    QuadratureError,
    SolverError,
    TailFitError,
)
from .potential import (
    AgmonData,
    PotentialSpec,
    agmon_distance,
    free_potential,
    make_potential,
    tunneling_action,
)
from .bloch import BandData, FloquetConfig, band_metrics, bloch_on_grid, solve_bands
from .wannier import (
    BasisDiagnostics,
    WannierBasis,
    basis_diagnostics,
    build_orthonormal_basis,
    fix_gauge,
    wannier_function,
)
from .operators import PeriodicDomain, domain_grid
from .tightbinding import (
    TBParams,
    band_hopping,
    effective_nonlinearity,
    extract_params,
    gamma_for_eta,
    h_matrix_elements,
    interaction_constant,
    residual_coupling_norm,
    with_eta,
)
from .dnls import (
    ContinuationResult,
    DnlsProblem,
    DnlsState,
    WeinsteinResult,
    decay_rate,
    dnls_residual,
    linearization_lplus,
    solve_anticontinuum,
    weinstein_threshold,
)
from .nlse import (
    ContinuumState,
    direct_newton_oracle,
    peak_cell_mass,
    project_first_band,
    reconstruct_and_correct,
    solve_perp_fixed_point,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
