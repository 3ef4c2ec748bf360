"""Semantic exception hierarchy shared across the package."""


class CausalBiasError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(CausalBiasError):
    """A structural model definition violates its contract."""


class CycleDetected(ModelError):
    """The endogenous definitions contain a dependency cycle."""


class UnknownVariable(ModelError, KeyError):
    """A name does not refer to any declared variable."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class MissingNoiseTerm(ModelError):
    """An exogenous noise variable is not used exactly once by one equation."""


class RoleConflict(ModelError):
    """Treatment/outcome/observed/latent roles do not partition the model."""


class UnknownModel(ModelError):
    """No built-in model with the requested name."""


class BadParams(ModelError, ValueError):
    """Built-in model parameters have the wrong shape or invalid values."""


class DomainError(CausalBiasError, ArithmeticError):
    """Evaluation left the domain of an operation (log/sqrt/division)."""


class NumericalError(CausalBiasError):
    """A numerical routine failed to produce a usable result."""


class NotInvertible(NumericalError):
    """A structural equation is not strictly monotone in its own noise."""


class NoRoot(NumericalError):
    """The target value lies outside the range of the structural equation."""


class NonConvergence(NumericalError):
    """An iterative optimizer hit its iteration cap above tolerance."""


class NotPositiveDefinite(NumericalError):
    """The negated curvature at the posterior mode is not positive-definite."""


class NonFiniteEntry(NumericalError):
    """A derivative or matrix entry came out non-finite."""


class EstimationError(CausalBiasError):
    """An estimator's preconditions are not met for the given query."""


class MediatorPresent(EstimationError):
    """Covariance-form bias is unavailable: an observed variable between
    treatment and outcome makes the joint density non-differentiable in the
    treatment; the per-source decomposition estimator must be used instead."""


class JointDensityUnavailable(EstimationError):
    """The joint density over the driving noise set, treatment and
    observations cannot be evaluated analytically for this model."""


class EmptyGroup(CausalBiasError, ValueError):
    """A requested summary group contains no rows."""


class DegenerateWeightsWarning(UserWarning):
    """Importance weights collapsed onto very few particles (tiny n_eff)."""
