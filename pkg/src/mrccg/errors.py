"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent input data (CSV parsing, label encoding, shapes)."""


class LpError(RuntimeError):
    """LP solver failure: infeasible warm start, singular basis, bad arguments."""


class CertificateError(LpError):
    """An optimality certificate check failed on a solution reported as optimal."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("certificate check failed: " + "; ".join(self.violations))


class NumericalError(RuntimeError):
    """A numerical invariant that should hold by construction was violated."""
