"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all lwfsmc errors."""


class TraceFormatError(PipelineError):
    """Malformed or invariant-violating trace input (line numbers included where known)."""


class InsufficientDataError(PipelineError):
    """Not enough samples for the requested operation."""


class DegenerateFitError(PipelineError):
    """Sample set admits no proper maximum-likelihood fit (e.g. zero variance)."""


class ConvergenceError(PipelineError):
    """Iterative solver failed to converge within its iteration cap."""


class DegenerateCellError(PipelineError):
    """A quantizer cell holds (numerically) no probability mass."""


class ModelValidationError(PipelineError):
    """A model object or model file violates its structural invariants."""
