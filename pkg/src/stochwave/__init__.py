"""Finite element / rational time-stepping solver for the semilinear
stochastic wave equation on (0, 1) with additive Q-Wiener noise, plus a
Monte Carlo harness that estimates strong and weak convergence rates against
coupled reference solutions.

Subpackages
-----------
fem        meshes, P1 assembly, projections, nested-grid transfer, spectral tools
noise      covariance models, load-increment sampling, deterministic streams
scheme     backward Euler / Crank-Nicolson steppers and trajectory drivers
analysis   error estimators, rate prediction and fitting, exact modal sampler
harness    convergence experiments, built-in configurations, report emission
cli        command-line front end (``stochwave`` entry point)
"""

from . import analysis, cli, fem, harness, noise, scheme, validation
from .analysis import (
    RatePrediction,
    RegularityParams,
    energy,
    fit_rates,
    predict_rates,
    strong_error_estimate,
    weak_error_estimate,
)
from .errors import (
    ConfigError,
    InsufficientDataError,
    NotPositiveSemidefiniteError,
    NumericError,
    SampleFailureError,
    StochwaveError,
)
from .fem import (
    FemFunction,
    FemOperators,
    Mesh1D,
    SpectralBasis,
    assemble_operators,
    build_uniform_mesh,
    discrete_eigen,
    fractional_norm,
    modal_coefficients,
    project_initial_data,
    prolongation_matrix,
    spectral_basis,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    builtin_experiment,
    emit_report,
    run_convergence_experiment,
)
from .noise import (
    CovarianceSpec,
    NoiseFactor,
    StreamSpec,
    build_noise_factor,
    derive_stream,
    exponential_kernel,
    restrict_load,
    sample_load_increment,
    white_noise,
)
from .scheme import (
    BACKWARD_EULER,
    CRANK_NICOLSON,
    Drift,
    State,
    Stepper,
    build_stepper,
    drift_load,
    run_coupled_paths,
    run_path,
    step,
)

__version__ = "0.1.0"
