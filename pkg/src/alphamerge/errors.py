"""Exception taxonomy shared across the package.

The CLI maps these onto its exit-code contract: usage problems exit 2,
capacity/precondition violations exit 3, numerical non-convergence exit 4.
"""


class AlphamergeError(Exception):
    """Base class for all package errors."""


class LabelError(AlphamergeError):
    """Unknown subsystem label, or a label-name collision."""


class DimensionError(AlphamergeError):
    """Incompatible or out-of-range Hilbert space dimensions."""


class StateError(AlphamergeError):
    """Data does not satisfy the state invariants (norm, PSD, trace, ...)."""


class CapacityError(AlphamergeError):
    """Channel cannot carry the requested subspace: alpha-dit capacity insufficient."""


class ConvergenceError(AlphamergeError):
    """Iterative solver failed to converge; carries the best bound found so far."""

    def __init__(self, message, best_bound=None):
        super().__init__(message)
        self.best_bound = best_bound
