"""Exception types shared across the package."""


class LingstError(ValueError):
    """Base class for all package errors."""


class DimensionError(LingstError):
    """Operands act on different qubit counts."""


class PhaseError(LingstError):
    """A Hermitian Pauli was required but an odd i-power was supplied."""


class ModelError(LingstError):
    """Invalid error model, or a circuit references a gate the model lacks."""


class DesignError(LingstError):
    """Invalid experiment-design request."""


class BackendError(LingstError):
    """Simulator backend guard violated or backend misuse."""


class DataError(LingstError):
    """Malformed or misaligned dataset."""
