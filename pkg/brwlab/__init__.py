"""
BRWLAB - Branching Random Walk Laboratory

A Python library for analyzing and simulating branching random walks on
countable vertex sets: extinction probabilities from generating functions,
growth rates and critical values from first moments, and Monte Carlo
estimates of global, local and strong local survival.
"""

from .errors import (AssumptionViolationError, BRWError, ConfigError, CouplingError, DomainError,
                     ModelRejectedError, NotLocallyIsomorphicError, NumericalError,
                     ReducibleMatrixError, TruncationError)
from .knobs import SolverKnobs, SpectralKnobs
from .model import (BRWModel, ContinuousCounterpartLaw, ExplicitFiniteLaw, FiniteOffspring, FiniteSpace,
                    GeometricOffspring, IndependentDiffusionLaw, LazySpace, MomentKernel, OffspringConfig,
                    analyze_digraph, build_moment_kernel, discrete_counterpart, project_local_isomorphism,
                    validate_model)
from .genfun import (Certificate, ExtinctionVector, eval_G, eval_H, global_extinction_bracket,
                     global_survival_certificate_check, local_extinction_vector, maximum_principle_check,
                     mv_certificate_check, mv_witness, never_hit_bracket, nodeath_generating_function)
from .spectral import (SurvivalReport, Verdict, classify_global_FBRW, classify_local_survival,
                       collatz_wielandt_check, convergence_parameter_sequence, estimate_growth_rates,
                       geometry_diagnostics, n_step_moments, perron_root, phi_gamma_series,
                       window_perron_bound)
from .simulate import (Population, SimOutcome, SurvivalEstimate, TrialPlan, coupled_truncation_sweep,
                       estimate_survival, one_step_moments, run_trial)
from .spaces import (CATALOG, ExampleDescriptor, KnownFact, build_example, homogeneous_tree, lattice_Zd,
                     radial_projection, radial_tree, sequence_condition_check)
from .store import ResultStore

__all__ = [
    "AssumptionViolationError", "BRWError", "ConfigError", "CouplingError", "DomainError",
    "ModelRejectedError", "NotLocallyIsomorphicError", "NumericalError", "ReducibleMatrixError",
    "TruncationError",
    "SolverKnobs", "SpectralKnobs",
    "BRWModel", "ContinuousCounterpartLaw", "ExplicitFiniteLaw", "FiniteOffspring", "FiniteSpace",
    "GeometricOffspring", "IndependentDiffusionLaw", "LazySpace", "MomentKernel", "OffspringConfig",
    "analyze_digraph", "build_moment_kernel", "discrete_counterpart", "project_local_isomorphism",
    "validate_model",
    "Certificate", "ExtinctionVector", "eval_G", "eval_H", "global_extinction_bracket",
    "global_survival_certificate_check", "local_extinction_vector", "maximum_principle_check",
    "mv_certificate_check", "mv_witness", "never_hit_bracket", "nodeath_generating_function",
    "SurvivalReport", "Verdict", "classify_global_FBRW", "classify_local_survival",
    "collatz_wielandt_check", "convergence_parameter_sequence", "estimate_growth_rates",
    "geometry_diagnostics", "n_step_moments", "perron_root", "phi_gamma_series", "window_perron_bound",
    "Population", "SimOutcome", "SurvivalEstimate", "TrialPlan", "coupled_truncation_sweep",
    "estimate_survival", "one_step_moments", "run_trial",
    "CATALOG", "ExampleDescriptor", "KnownFact", "build_example", "homogeneous_tree", "lattice_Zd",
    "radial_projection", "radial_tree", "sequence_condition_check",
    "ResultStore",
]

__version__ = "0.1.0"
