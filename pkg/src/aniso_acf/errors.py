class ConvergenceError(RuntimeError):
    """An iterative solver hit its cap or broke a monotonicity guard."""

    def __init__(self, message, iterations=None, history=None):
        super().__init__(message)
        self.iterations = iterations
        self.history = list(history) if history is not None else []


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class HypothesisViolation(ValueError):
    """Input data does not satisfy the discrete hypothesis of a check."""

    def __init__(self, message, nodes=None):
        super().__init__(message)
        self.nodes = nodes if nodes is not None else []
