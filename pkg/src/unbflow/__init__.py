"""Fixed-step gradient descent for log-sum-exp and operator-scaling objectives,
with coarse block recovery from the escape direction."""
from .errors import (EigenConvergenceError, InstanceError, InvariantViolation,
                     PositivityError, UnresolvedStructure)
from .tuples import MatrixTuple

__version__ = "0.1.0"

__all__ = ["EigenConvergenceError", "InstanceError", "InvariantViolation",
           "MatrixTuple", "PositivityError", "UnresolvedStructure", "__version__"]
