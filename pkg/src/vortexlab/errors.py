"""Exception types shared across the package."""


class VortexLabError(Exception):
    """Base class for structured errors raised by this package."""


class GridMismatchError(VortexLabError):
    """A field was used with a grid it does not live on."""


class ValidationError(VortexLabError):
    """Invalid configuration. Collects every violated field."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class SolvabilityError(VortexLabError):
    """A solvability constraint is violated; names the constraint."""

    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class SolverError(VortexLabError):
    """Iteration failed to converge. Carries the residual history."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])
