"""Causal-bias quantification for continuous treatments in structural causal models.

Declare a model (noise distributions, structural expressions, roles), then:

* decide identifiability by covariate adjustment graphically,
* approximate the latent-noise posterior given a treatment value and
  observations (Laplace or importance sampling), and
* estimate association, average partial effect on the treated, and causal
  bias with a per-source decomposition.
"""

from .autodiff import Dual, SecondOrder, gradient, hessian, invert_in_noise
from .dists import StandardGaussian, Trapezoidal
from .errors import (
    BadParams,
    CausalBiasError,
    CycleDetected,
    DegenerateWeightsWarning,
    DomainError,
    EmptyGroup,
    JointDensityUnavailable,
    MediatorPresent,
    MissingNoiseTerm,
    NoRoot,
    NonConvergence,
    NonFiniteEntry,
    NotInvertible,
    NotPositiveDefinite,
    RoleConflict,
    UnknownModel,
    UnknownVariable,
)
from .expr import (
    Const,
    Expr,
    Indicator,
    Var,
    exp,
    ind_ge,
    ind_lt,
    ind_range,
    log,
    sigmoid,
    sqrt,
)
from .estimators import (
    BiasReport,
    association,
    association_finite_difference,
    average_partial_effect,
    bias_covariance_form,
    bias_report,
    causal_bias,
)
from .graphs import (
    CausalGraph,
    IdentifiabilityVerdict,
    adjustment_criterion,
    causal_exogenous_set,
    d_separated,
    find_open_path,
    identifiable_by_adjustment,
)
from .inference import (
    ComposedParticles,
    InferenceOptions,
    LaplacePosterior,
    ParticlePosterior,
    compose_full_posterior,
    importance_posterior,
    laplace_posterior,
    map_estimate,
    materialize_particles,
)
from .scm import (
    Dataset,
    PartialEvaluation,
    Roles,
    Scm,
    build_scm,
    evaluate_endogenous,
    load_scm,
    partial_evaluate,
    sample_observational,
    save_scm,
    scm_from_json,
    scm_to_json,
)
from .zoo import (
    AscvdParams,
    LinearModelParams,
    ascvd_summary,
    builtin,
    builtin_names,
    closed_form,
)

__version__ = "0.1.0"
