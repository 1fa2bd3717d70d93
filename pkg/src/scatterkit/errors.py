"""Exception hierarchy shared by every scatterkit module."""


class ScatterkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(ScatterkitError, ValueError):
    """Input violates a documented precondition or type invariant."""


class SpectralPoleError(ScatterkitError, ValueError):
    """Resolvent requested too close to an eigenvalue."""

    def __init__(self, z, eigenvalue, guard):
        self.z = z
        self.eigenvalue = eigenvalue
        self.guard = guard
        super().__init__(
            f"spectral pole: z={z!r} lies within {guard:g} of eigenvalue {eigenvalue!r}"
        )


class ConvergenceError(ScatterkitError, RuntimeError):
    """Iterative kernel failed to converge."""

    def __init__(self, message, iterations):
        self.iterations = iterations
        super().__init__(f"{message} (after {iterations} iterations)")


class MeshResolutionError(ScatterkitError, ValueError):
    """Regularization scale is finer than the discrete eigenvalue mesh allows."""
