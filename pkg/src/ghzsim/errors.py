"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A netlist, channel or command-line configuration is invalid."""


class ParameterError(ValueError):
    """A physical or numerical parameter is out of its allowed range."""


class InvariantViolation(RuntimeError):
    """An internal state invariant was broken (indicates a wiring bug)."""


class CalibrationError(RuntimeError):
    """The ideal circuit does not herald a GHZ state under any sign choice."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
