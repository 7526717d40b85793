"""Exception hierarchy shared by all modules."""


class KgError(Exception):
    """Base class for all package errors."""


class ConfigError(KgError):
    """Malformed or inconsistent experiment configuration."""


class WeightError(KgError):
    """Localizing weight violates a required constraint (sign or integrability)."""


class PreconditionError(KgError):
    """An operation was called outside its documented preconditions."""


class NumericalError(KgError):
    """A numerical diagnostic failed during a run."""


class NonFiniteStateError(NumericalError):
    """The evolved state left the representable range (overflow/NaN)."""


class ProposalCapError(NumericalError):
    """Rejection sampler exhausted its proposal budget without accepting."""


class DriftExclusionError(NumericalError):
    """Too many trajectories exceeded the energy-drift tolerance."""


class NonContractionError(NumericalError):
    """Fixed-point map measured as non-contractive on the requested horizon."""
