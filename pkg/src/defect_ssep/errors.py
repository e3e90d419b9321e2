"""Exception types shared across the package."""


class AdjacencyError(ValueError):
    """Raised when a swap is requested for a non-adjacent site pair."""


class OrderingError(ValueError):
    """Raised when a coupled evolution starts from an unordered pair."""


class CapacityError(ValueError):
    """Raised when an exact-oracle request exceeds the state-space cap."""


class ProvenanceError(ValueError):
    """Raised when an operation needs a measure of a different provenance."""


class NormalizationError(ValueError):
    """Raised when a state-indexed function is not a probability density."""


class AbsoluteContinuityError(ValueError):
    """Raised when relative entropy is requested against a vanishing weight."""


class DomainError(ValueError):
    """Raised for arguments outside an operation's admissible domain."""


class StabilityError(ValueError):
    """Raised when an explicit time step violates its stability bound."""


class AlignmentError(ValueError):
    """Raised when empirical and reference data have mismatched times."""


class TestFunctionClassError(ValueError):
    """Raised when a test function fails its regime's admissibility check."""


class ConsistencyError(RuntimeError):
    """Raised when two algebraically identical computations disagree."""


class ConfigError(ValueError):
    """Raised for invalid experiment configurations; carries field names."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
