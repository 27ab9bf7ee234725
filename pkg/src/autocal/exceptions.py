"""Exception types shared across the package."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before converging."""


class OptimizationError(RuntimeError):
    """Every optimization start failed; carries the per-start traces."""

    def __init__(self, message, traces=None):
        super().__init__(message)
        self.traces = traces or []
