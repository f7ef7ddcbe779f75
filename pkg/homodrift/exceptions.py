"""Errors raised by the homodrift toolkit."""

from __future__ import annotations


class HomodriftError(Exception):
    """Base class of all the domain errors."""


class ConfigError(HomodriftError, ValueError):
    """Invalid experiment configuration or command line input."""


class QuadratureError(HomodriftError, ValueError):
    """Invalid quadrature request or inconsistent quadrature results."""


class SimulationError(HomodriftError):
    """The time stepper produced a nonfinite state or was misconfigured."""

    def __init__(self: SimulationError, message: str, step: int | None = None) -> None:
        """Keep the step index at which the integration failed."""
        super().__init__(message if step is None else f'{message} (step {step})')
        self.step = step


class SpectralError(HomodriftError):
    """The generator eigenproblem could not be solved to the required accuracy."""


class InadmissibleParameterError(HomodriftError, ValueError):
    """The candidate drift parameter does not keep the dynamics confining."""


class EstimatorUndefinedError(HomodriftError, ArithmeticError):
    """A closed-form estimator is undefined for the given sample."""


class ResultMismatchError(HomodriftError):
    """A stored result does not match the configuration it is reloaded with."""
