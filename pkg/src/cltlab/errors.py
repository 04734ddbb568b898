"""Exception hierarchy shared by every cltlab module."""


class CltlabError(ValueError):
    """Base class for contract violations raised by cltlab."""


class GridError(CltlabError):
    pass


class WindowTooSmallError(CltlabError):
    """A density has not decayed inside the grid window."""


class ProfileError(CltlabError):
    pass


class DegenerateDensityError(CltlabError):
    pass


class ResolutionError(CltlabError):
    """Spectral output rang negative beyond the clipping tolerance."""


class ConfigError(CltlabError):
    pass


class CheckFailure(CltlabError):
    """An asserted inequality or identity did not hold.

    Carries the fields of a structured failure record so the CLI can print
    a one-line, machine-parseable diagnosis.
    """

    def __init__(self, check, lhs, rhs, tol, level=None, detail=""):
        self.check = check
        self.lhs = lhs
        self.rhs = rhs
        self.tol = tol
        self.level = level
        self.detail = detail
        msg = f"{check} failed at level={level}: lhs={lhs!r} rhs={rhs!r} tol={tol!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class InfiniteFisherError(CltlabError):
    """A bound needs I(rho) but the Fisher information is not resolved (infinite)."""
