"""Exception types shared across the package."""

from __future__ import annotations


class SfkolmoError(Exception):
    """Base class for all package errors."""


class NonFinite(SfkolmoError):
    """A computed quantity is NaN or infinite."""


class SingularCovariance(SfkolmoError):
    """The noise covariance is not strictly positive definite."""


class OutOfRange(SfkolmoError):
    """A delay offset falls outside the buffer window [-r, 0]."""


class ColdBuffer(SfkolmoError):
    """The segment buffer was queried before being filled."""


class InvalidParameter(SfkolmoError):
    """A model parameter violates its catalog constraint."""


class NonExtinguishable(SfkolmoError):
    """The requested face would pin something that cannot vanish.

    Raised for coordinates without multiplicative structure and for faces a
    conservation law makes unreachable (a replicator's empty face).
    """


class DimensionMismatch(SfkolmoError):
    """An array argument has the wrong shape for the model dimension."""


class StepUnderflow(SfkolmoError):
    """A step could not keep a coordinate positive.

    Raised when a single-step affine proposal lands nonpositive, when
    bridged substep halving hits its depth limit, or when a multiplicative
    coordinate underflows the positivity floor.
    """


class Diverged(SfkolmoError):
    """The simulated path exceeded the divergence guard."""


class InsufficientBatches(SfkolmoError):
    """Too few batches after burn-in for a batch-means estimate."""


class EmptyHistogram(SfkolmoError):
    """The occupation histogram collected no mass."""


class InfeasibleLP(SfkolmoError):
    """The certificate linear program has no feasible point."""


class SingularSystem(SfkolmoError):
    """The analytic threshold system is singular."""


class SingularDiffusion(SfkolmoError):
    """The diffusion Gram matrix is singular at a sampled segment."""


class DomainError(SfkolmoError):
    """A functional was evaluated outside its domain."""


class ConstraintInfeasible(SfkolmoError):
    """No parameter assignment satisfies the requested constraint chain."""


class ConfigError(SfkolmoError):
    """An experiment configuration failed validation.

    ``field`` is the dotted path of the offending entry so callers can emit
    "path.field: message" diagnostics.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.reason = message
