"""Exception taxonomy shared across the pipeline.

The CLI maps these onto exit codes: configuration/usage problems -> 1,
missing upstream artifacts -> 2, numerical failures -> 3.
"""


class RepresentationError(ValueError):
    """Malformed value: wrong arity, bad dtype, unparseable file."""


class FeasibilityError(ValueError):
    """Hull parameters violate constraints required by the operation."""


class DomainError(ValueError):
    """Numeric argument outside the operation's domain."""


class SingularityError(DomainError):
    """Argument hits a singular point of a formula (e.g. ITTC at Re <= 100)."""


class GenerationError(RuntimeError):
    """Random generation exhausted its retry budget."""


class TrainingError(RuntimeError):
    """Model training diverged or was given unusable data."""


class DegeneracyError(ValueError):
    """Input data lacks the rank/variance the operation needs."""


class ConfigurationError(ValueError):
    """Bad or unknown configuration key, or inconsistent options."""


class DependencyError(RuntimeError):
    """A required upstream artifact is missing."""


class QuadratureAccuracyWarning(UserWarning):
    """Quadrature self-check disagreed by more than the trusted threshold."""
