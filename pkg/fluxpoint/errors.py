"""Exceptions raised by fluxpoint."""

from __future__ import annotations


class FluxpointError(Exception):
    """Base class for all fluxpoint errors."""

    def context(self) -> dict:
        """Machine-readable fields reported next to the message."""
        return {}


class InvalidDomain(FluxpointError):
    """Domain description has zero measure or is malformed."""


class InsufficientSupport(FluxpointError):
    def __init__(self, point: int, count: int, required: int):
        super().__init__(
            f"point {point} has {count} support members, {required} required"
        )
        self.point = point
        self.count = count
        self.required = required

    def context(self) -> dict:
        return {"point": self.point, "count": self.count, "required": self.required}


class IllConditioned(FluxpointError):
    def __init__(self, pivot_ratio: float):
        super().__init__(f"constraint system pivot ratio {pivot_ratio:.3e}")
        self.pivot_ratio = pivot_ratio

    def context(self) -> dict:
        return {"pivot_ratio": self.pivot_ratio}


class DegenerateCell(FluxpointError):
    def __init__(self, point: int):
        super().__init__(f"control cell of point {point} is empty")
        self.point = point

    def context(self) -> dict:
        return {"point": self.point}


class InvalidBoundary(FluxpointError):
    def __init__(self, point: int, reason: str = "missing normal"):
        super().__init__(f"boundary point {point}: {reason}")
        self.point = point

    def context(self) -> dict:
        return {"point": self.point}


class SolverBreakdown(FluxpointError):
    """BiCGSTAB recurrence broke down (rho or omega vanished)."""


class MaxIterations(FluxpointError):
    def __init__(self, x, iterations: int, residual: float):
        super().__init__(
            f"BiCGSTAB did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.x = x
        self.iterations = iterations
        self.residual = residual

    def context(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual}


class ConfigError(FluxpointError):
    def __init__(self, message: str, path: str | None = None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path

    def context(self) -> dict:
        return {} if self.path is None else {"key": self.path}


class StepError(FluxpointError):
    def __init__(self, step: int, t: float, cause: Exception):
        super().__init__(f"step {step} (t={t:.6g}): {cause}")
        self.step = step
        self.t = t
        self.cause = cause

    def context(self) -> dict:
        ctx = {"step": self.step, "t": self.t, "cause": type(self.cause).__name__}
        if isinstance(self.cause, FluxpointError):
            ctx.update(self.cause.context())
        return ctx
