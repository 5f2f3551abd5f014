"""Exception hierarchy shared by every module."""


class GmwbHitError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(GmwbHitError, ValueError):
    """An argument lies outside the domain of the function."""


class PoleError(GmwbHitError, ValueError):
    """An argument sits (within tolerance) on a pole of Gamma or Kummer M."""


class NonConvergence(GmwbHitError, ArithmeticError):
    """A series, quadrature or root search ran out of its iteration budget."""


class TailBoundFailure(GmwbHitError, ArithmeticError):
    """No admissible truncation point, or the truncated integral is swamped by
    cancellation (integrand magnitude too large relative to the result)."""


class CaseError(GmwbHitError, ValueError):
    """Start/target pair matches none of the supported hitting-time cases."""


class PoleDegeneracy(GmwbHitError, ArithmeticError):
    """Two residue poles coincide; perturb the fee slightly and retry."""


class NoBracket(GmwbHitError, ValueError):
    """The pricing gap does not change sign on the search bracket."""
