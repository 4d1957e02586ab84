"""Dense Hermitian toolkit: Sylvester/Riccati solvers, block diagonalization
via angular operators, and spectral shift functions."""

from .core import (
    HermitianOperator,
    NormReport,
    SpectralDecomposition,
    apply_function,
    ec_norm,
    eig_hermitian,
    norm_report,
    resolvent,
    schatten_norm,
    spec_distance,
    spectral_projector,
)
from .sylvester import (
    ContourSpec,
    FourierKernel,
    SylvesterProblem,
    solve_contour,
    solve_double_stieltjes,
    solve_exponential,
    solve_fourier,
    solve_oracle,
    solve_stieltjes,
    sylvester_residual,
)
from .riccati import (
    ExistenceCertificate,
    FriedrichsModel,
    IterationOptions,
    IterationTrace,
    RiccatiProblem,
    dual_riccati_check,
    existence_report,
    friedrichs_sharpness,
    friedrichs_solve,
    iterate_fourier,
    iterate_stieltjes,
    riccati_residual,
)
from .blockdiag import (
    AngularOperator,
    BlockOperatorMatrix,
    DiagonalizationResult,
    HypothesisReport,
    adl_projections,
    graph_projector,
    homotopy_scan,
    hypothesis_report,
    schatten_inheritance_check,
    similarity_diagonalize,
    solve_angular,
    unitary_diagonalize,
)
from .ssf import (
    BumpFunction,
    DeterminantTrace,
    StepFunction,
    bump_family,
    counting_from_spectra,
    counting_ssf,
    perturbation_determinant,
    splitting_check,
    ssf_via_argument,
    trace_formula_check,
    vanishing_check,
)
from .campaign import ExperimentConfig, emit_report, generate_instance, run_experiment

__version__ = "0.1.0"
