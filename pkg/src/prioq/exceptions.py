"""Exception and warning classes raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation (e.g. off-support)."""


class ContractError(ValueError):
    """An input violates a documented precondition (invalid density, bad protocol)."""


class UnsupportedConfigurationError(ValueError):
    """The requested combination of model parameters is not implemented."""


class DegenerateRegimeError(ValueError):
    """The p = 1 regime has no stationary law; the requested quantity is undefined."""


class DivergenceError(ArithmeticError):
    """The Neumann series cannot be certified to converge.

    Attributes
    ----------
    hs_norm : float
        Hilbert-Schmidt norm of the iteration kernel that triggered the refusal.
    """

    def __init__(self, hs_norm, message=None):
        self.hs_norm = float(hs_norm)
        if message is None:
            message = (
                f"Hilbert-Schmidt norm {self.hs_norm:.6g} >= 1; "
                "convergence of the Neumann series is unknown"
            )
        super().__init__(message)


class NonConvergenceWarning(RuntimeWarning):
    """An iteration stopped at its term budget before reaching tolerance."""


class PartialResultWarning(RuntimeWarning):
    """A Monte Carlo battery could not reach its target for every replica."""
