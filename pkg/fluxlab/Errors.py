# fluxlab/Errors.py

from typing import Any, Dict


class FluxLabError(Exception):
    """Base class for every failure raised by the toolkit.

    Carries a free-form context dict that the CLI prints next to the error
    name, and the process exit code the CLI should return.
    """
    exit_code = 3

    def __init__(self, message: str = "", **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    @property
    def name(self) -> str:
        return type(self).__name__

    def describe(self) -> str:
        if not self.context:
            return f"{self.name}: {self.message}"
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.name}: {self.message} ({details})"


class InputError(FluxLabError):
    """Invalid input, configuration or precondition."""
    exit_code = 2


# --- input errors ---------------------------------------------------------

class ConfigurationError(InputError):
    pass


class NoArborescence(InputError):
    pass


class AmbiguousWinding(InputError):
    pass


class GridMismatch(InputError):
    pass


class GridTooCoarse(InputError):
    pass


class StepTooLarge(InputError):
    pass


class InsufficientData(InputError):
    pass


class InvalidChain(InputError):
    pass


class ReducibleChain(InputError):
    pass


class NotAZero(InputError):
    pass


# --- numerical failures ---------------------------------------------------

class DegenerateZero(FluxLabError):
    pass


class IncompleteSweep(FluxLabError):
    pass


class NonSymmetricJacobian(FluxLabError):
    pass


class EscapeTimeout(FluxLabError):
    pass


class AmbiguousTarget(FluxLabError):
    pass


class GainMismatch(FluxLabError):
    pass


class AmbiguousMinimum(FluxLabError):
    pass


class NoSignedCycle(FluxLabError):
    pass


class ExactFormNoFlux(FluxLabError):
    pass


class AssumptionViolated(FluxLabError):
    pass


class WindowTooSmall(FluxLabError):
    pass


class NonConvergence(FluxLabError):
    def __init__(self, message: str = "", best: Any = None, **context: Any):
        super().__init__(message, **context)
        self.best = best


class NotConverged(FluxLabError):
    pass


class NegativeDensity(FluxLabError):
    pass


class QuadratureFailure(FluxLabError):
    pass
