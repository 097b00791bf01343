"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(RuntimeError):
    """An exhaustive enumeration would exceed its size guard."""


class ConfigurationError(ValueError):
    """A measure or run configuration is invalid or irregular."""


class InvariantError(ValueError):
    """A constructed object violates a structural invariant."""


class NotStronglyLipschitz(ValueError):
    """A map table is not induced by any partition operator.

    ``witness`` holds a pair ``(lam, lam2)`` whose images lose part of
    their overlap.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
