"""Exception hierarchy shared by all hessianlab modules."""


class HessianLabError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(HessianLabError, ValueError):
    """Input fails a structural check (e.g. a matrix is not Hermitian)."""


class PreconditionError(HessianLabError, ValueError):
    """Input lies outside the region where an operation is defined."""


class StencilError(HessianLabError, IndexError):
    """A finite-difference stencil reaches outside the usable region."""


class ConfigurationError(HessianLabError, ValueError):
    """A domain, grid, or run configuration is invalid."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ConeError(HessianLabError):
    """A discrete Hessian left the admissible cone."""

    def __init__(self, message, index=None, margin=None):
        self.index = index
        self.margin = margin
        super().__init__(message)


class InitializationError(HessianLabError):
    """No admissible starting field could be constructed."""


class ConvergenceError(HessianLabError):
    """An iteration hit its cap before meeting its tolerance."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics
        super().__init__(message)


class GluingError(HessianLabError):
    """A local piece for the gluing construction could not be produced."""

    def __init__(self, message, worst_margin=None):
        self.worst_margin = worst_margin
        super().__init__(message)


class ModificationError(HessianLabError):
    """A modified local piece fails one of its required properties."""

    def __init__(self, message, bullet=None, location=None):
        self.bullet = bullet
        self.location = location
        super().__init__(message)


class CoverError(HessianLabError):
    """A chart cover leaves some grid point uncovered or is malformed."""


class ExpressionError(HessianLabError, ValueError):
    """A field expression failed to parse or to evaluate."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at column {position})"
        super().__init__(message)
