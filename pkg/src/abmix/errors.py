"""Exception types shared across the package."""


class AbmixError(Exception):
    """Base class for package errors."""


class OutOfSupportError(AbmixError):
    """A parameter vector lies outside the target's support."""


class ConfigError(AbmixError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class NumericError(AbmixError):
    """Non-finite value encountered mid-run (CLI exit code 3).

    Carries a diagnostic snapshot of the chain state at failure.
    """

    def __init__(self, message, state=None, iteration=None):
        super().__init__(message)
        self.state = state
        self.iteration = iteration

    def __str__(self):
        base = super().__str__()
        if self.iteration is not None:
            base += f" (iteration {self.iteration})"
        if self.state is not None:
            base += f"; state = {list(self.state)}"
        return base
