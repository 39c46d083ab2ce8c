"""Simulation and likelihood inference for stable continuous-state
branching processes, built on numerical Laplace-transform inversion."""

from .bayes import (
    PriorSpec,
    WeightedPosterior,
    compute_weights,
    posterior_expectation,
    posterior_summary,
    posterior_variance,
    sample_prior,
)
from .errors import (
    ConfigurationError,
    CsbpError,
    DegenerateConditioningError,
    InstabilityError,
)
from .estimation import (
    AlphaFit,
    AlphaGrid,
    FitResult,
    JointFit,
    OptimizerConfig,
    fit_gamma_beta,
    joint_fit_unrestricted,
    loglik,
    transition_densities,
    two_step_fit,
)
from .experiments import (
    ExperimentPlan,
    run_bayes_experiment,
    run_identifiability_experiment,
    run_stability_experiment,
    run_stability_region_scan,
    simulate_paths,
)
from .inversion import (
    InversionConfig,
    InversionDiagnostics,
    TransformHandle,
    aliasing_error_bound,
    effective_a,
    invert_cdf,
    invert_density,
)
from .model import (
    ModelParams,
    SingularitySet,
    TransitionContext,
    conditional_laplace,
    conditional_transform,
    extinction_probability,
    laplace_exponent,
    laplace_exponent_at_infinity,
    psi,
    singularities,
    small_value_cdf_constant,
)
from .sampling import (
    RngStream,
    Trajectory,
    sample_transition,
    sample_transitions,
    simulate_path,
    transition_cdf,
    write_manifest,
    write_trajectories_csv,
)

__version__ = "0.1.0"
