"""Exception hierarchy shared by all laxlab modules."""

from __future__ import annotations


class LaxLabError(Exception):
    """Base class for every error raised by laxlab."""


class ConfigError(LaxLabError, ValueError):
    """Invalid configuration; ``field`` names the offending entry when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


# elliptic
class DegenerateModulus(LaxLabError, ValueError):
    pass


class NomeOutOfRange(LaxLabError, ValueError):
    pass


class PathThroughBranchPoint(LaxLabError, ValueError):
    pass


# surfaces / lattices
class DegenerateCurve(LaxLabError, ValueError):
    pass


class BranchPointInput(LaxLabError, ValueError):
    pass


class ZeroZ0(LaxLabError, ValueError):
    pass


# flows
class BlowUp(LaxLabError):
    """State norm escaped the blow-up threshold.

    ``t_est`` is the fitted pole location, ``exponent`` the fitted pole order
    and ``samples`` the accepted samples up to the escape.
    """

    def __init__(self, t_est, exponent=None, samples=None):
        super().__init__(f"solution blows up near t = {t_est:.12g}")
        self.t_est = t_est
        self.exponent = exponent
        self.samples = samples if samples is not None else []


class StepCollapse(LaxLabError):
    pass


class NoBlowUp(LaxLabError):
    pass


class SingularFactor(LaxLabError):
    pass


# toeplitz
class AliasRisk(LaxLabError):
    pass


class NotSingular(LaxLabError):
    pass


class NoConvergence(LaxLabError):
    pass
