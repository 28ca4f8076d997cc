"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's preconditions."""


class SolverFailure(RuntimeError):
    """A linear solve did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepFailure(RuntimeError):
    """A Picard iteration for one time step ran out of iterations."""

    def __init__(self, message, report=None, t=None):
        super().__init__(message)
        self.report = report
        self.t = t


class FixedPointFailure(RuntimeError):
    """The outer control loop hit its iteration cap before the metrics dropped
    below tolerance; carries the last report and trajectory for inspection."""

    def __init__(self, message, report=None, trajectory=None):
        super().__init__(message)
        self.report = report
        self.trajectory = trajectory


class ConfigError(Exception):
    """An experiment configuration file is missing, malformed, or inconsistent."""
