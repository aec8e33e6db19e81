"""Exception hierarchy shared by the solver, verification and CLI layers."""


class NSDDEError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class SchemaViolation(NSDDEError, ValueError):
    """Configuration document does not match the documented schema."""

    exit_code = 2

    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class ParameterRangeError(NSDDEError, ValueError):
    """A model or taming parameter lies outside its admissible window."""

    exit_code = 2


class GuardViolation(NSDDEError):
    """Configured step size breaks a step-size admissibility bound."""

    exit_code = 3

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class SolverNonConvergence(NSDDEError):
    """The implicit step solver exhausted its iteration budget."""

    exit_code = 4

    def __init__(self, step, residual, message=None):
        self.step = step
        self.residual = residual
        super().__init__(
            message
            or f"implicit solve did not converge at step {step} (residual {residual:.3e})"
        )


class GridMismatchError(NSDDEError, ValueError):
    """Step sizes, delay and horizon are not commensurate."""

    exit_code = 5


class InvalidExperiment(NSDDEError, ValueError):
    """Experiment request is structurally invalid (e.g. too few levels)."""

    exit_code = 6


class DegenerateRegression(InvalidExperiment):
    """Log-log regression on non-positive data."""


class InvalidCoefficientError(NSDDEError, ValueError):
    """A coefficient evaluated to a non-finite value."""

    exit_code = 7
