class EigenConvergenceError(ArithmeticError):
    pass


class PositivityError(ValueError):
    pass


class InstanceError(ValueError):
    """Input violates an instance invariant (kernels, dimensions, signs)."""


class InvariantViolation(RuntimeError):
    """A per-iteration guarantee failed; signals a numerics bug."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class UnresolvedStructure(ValueError):
    """Block clustering could not be made consistent."""
