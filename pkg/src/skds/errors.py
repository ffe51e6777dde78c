"""Exception types raised across the package."""


class SkdsError(Exception):
    """Base class; ``code`` is the machine-readable name used by the CLI."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InvalidInput(SkdsError, ValueError):
    code = "InvalidInput"


class InsufficientData(SkdsError, ValueError):
    code = "InsufficientData"


class UnsupportedKernel(SkdsError, ValueError):
    code = "UnsupportedKernel"


class NonPositiveValue(SkdsError, ValueError):
    code = "NonPositiveValue"


class Diverged(SkdsError, RuntimeError):
    code = "Diverged"

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"simulation diverged at step {step}")

    def to_dict(self):
        return {**super().to_dict(), "step": self.step}


class NotStable(SkdsError, RuntimeError):
    code = "NotStable"


class NearSingular(SkdsError, RuntimeError):
    code = "NearSingular"


class NonFiniteLoss(SkdsError, RuntimeError):
    code = "NonFiniteLoss"

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")

    def to_dict(self):
        return {**super().to_dict(), "step": self.step}


class NoConvergence(SkdsError, RuntimeError):
    code = "NoConvergence"

    def __init__(self, best, residual, message=None):
        self.best = best
        self.residual = residual
        super().__init__(
            message or f"no convergence: best value {best!r}, residual {residual:.3g}"
        )

    def to_dict(self):
        return {**super().to_dict(), "best": self.best, "residual": self.residual}


class ConfigError(SkdsError, ValueError):
    code = "ConfigError"
