"""Exception types raised across the package."""


class StructuralError(ValueError):
    """Table or index dimensions do not match the scenario."""


class UnsupportedOperationError(ValueError):
    """The operation is not defined for the given scenario shape."""


class DegeneratePostselectionError(ValueError):
    """A conditioning event has zero probability for some setting."""

    def __init__(self, message, setting=None, party=None):
        super().__init__(message)
        self.setting = setting
        self.party = party


class SearchSpaceError(ValueError):
    """Brute-force enumeration would exceed the configured size limit."""

    def __init__(self, cardinality, limit):
        super().__init__(f"search space of {cardinality} strategies exceeds limit {limit}")
        self.cardinality = cardinality
        self.limit = limit


class NoThresholdError(ValueError):
    """The quantum value does not exceed the classical bound."""


class NoSolutionError(ValueError):
    """A threshold cannot be reached anywhere in the admissible range."""


class PreconditionError(ValueError):
    """Inputs violate the hypotheses of a check."""
