"""Exception hierarchy shared by all solver and audit modules."""


class ReflectalError(Exception):
    """Base class for all errors raised by this package."""


class InvalidShape(ReflectalError):
    """Domain parameters do not describe a valid bounded convex domain."""


class AuditFailure(ReflectalError):
    """A numerical audit found a witness violating an assumed inequality."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class UnknownPreset(ReflectalError):
    """Requested coefficient preset is not in the registry."""


class NumericalBlowup(ReflectalError):
    """A coefficient or state evaluation returned a non-finite value."""


class MissingNoise(ReflectalError):
    """Operation needs the Brownian increment record but it is absent."""


class StartOutsideDomain(ReflectalError):
    """A path handed to the constraining map does not start inside the domain."""


class FixedPointDivergence(ReflectalError):
    """Implicit backward step did not converge within the iteration budget."""


class OutOfLattice(ReflectalError):
    """Query point lies outside the hull of the value-field lattice."""


class SingularDiffusion(ReflectalError):
    """sigma sigma* is numerically singular where the action integrand needs its inverse."""


class InfeasiblePath(ReflectalError):
    """Path leaves the closed domain, so its action is +infinity."""


class NoDescent(ReflectalError):
    """Line search stalled; carries the best iterate found so far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConstraintInfeasible(ReflectalError):
    """Penalty continuation could not drive the constraint violation below tolerance."""


class InsufficientPaths(ReflectalError):
    """Monte Carlo standard error too large for a trustworthy estimate."""


class ZeroHits(ReflectalError):
    """No exceedance events observed at some noise level."""


class DegenerateFit(ReflectalError):
    """Log-log regression input has no spread in the abscissa."""


class ConfigInvalid(ReflectalError):
    """Experiment config failed validation; `field` points at the offender."""

    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason
