class CoverageError(ValueError):
    """A requested band or frequency lies outside the data grid."""


class NumericError(RuntimeError):
    """A numerical procedure failed to produce a result."""


class SingularCircuitError(NumericError):
    """The nodal system has no unique solution."""
