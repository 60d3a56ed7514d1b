"""Exception types raised across the package."""


class NcsError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(NcsError):
    pass


class BadProbability(NcsError):
    pass


class NotPSD(NcsError):
    def __init__(self, field, detail=""):
        self.field = field
        super().__init__(f"{field} is not symmetric positive semidefinite"
                         + (f": {detail}" if detail else ""))


class NotPD(NcsError):
    def __init__(self, field, detail=""):
        self.field = field
        super().__init__(f"{field} is not symmetric positive definite"
                         + (f": {detail}" if detail else ""))


class NeedPW(NcsError):
    """Uniqueness assumption requested without a stationary cost matrix."""


class SingularInnovation(NcsError):
    pass


class SingularGamma(NcsError):
    def __init__(self, k=None):
        self.k = k
        super().__init__("control weighting Gamma is singular"
                         + (f" at step {k}" if k is not None else ""))


class SingularOmega(NcsError):
    def __init__(self, k=None):
        self.k = k
        super().__init__("correction weighting Omega is singular"
                         + (f" at step {k}" if k is not None else ""))


class NotPositiveDefinite(NcsError):
    """A solvability block lost positive definiteness during the recursion."""

    def __init__(self, k, which, pivot=None):
        self.k = k
        self.which = which
        self.pivot = pivot
        msg = f"{which} not positive definite at step {k}"
        if pivot is not None:
            msg += f" (smallest pivot {pivot:.3e})"
        super().__init__(msg)


class NoConvergence(NcsError):
    def __init__(self, max_iter, detail=""):
        self.max_iter = max_iter
        super().__init__(f"fixed-point iteration did not converge within {max_iter} iterations"
                         + (f": {detail}" if detail else ""))


class NotCertified(NcsError):
    def __init__(self, failing):
        self.failing = failing
        super().__init__(f"stationary solution lacks certificate(s): {failing}")


class ScheduleMismatch(NcsError):
    pass


class CovNotConverged(NcsError):
    def __init__(self, max_iter):
        self.max_iter = max_iter
        super().__init__(f"covariance iteration did not converge within {max_iter} iterations")


class NotStable(NcsError):
    """Closed-loop second moments are unbounded; no steady state exists."""
