"""Exception types raised by the T^(r)-free process laboratory."""


class InvalidArgumentError(ValueError):
    """An argument lies outside the domain of the operation."""


class ContractViolationError(ValueError):
    """A caller broke a documented precondition (e.g. oracle input already contains a copy)."""


class ConfigError(ValueError):
    """A run configuration failed validation or its output path is unusable."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}
