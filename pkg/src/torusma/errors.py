"""Exception hierarchy shared by all torusma modules."""


class TorusmaError(Exception):
    """Base class for all library errors."""


class GridMismatch(TorusmaError):
    """Fields that must share a grid do not."""


class NormInfinite(TorusmaError):
    """An Orlicz norm bracket never reaches integral <= 1."""


class ConeExit(TorusmaError):
    """The line search could not keep the metric inside the positive cone."""


class NoConvergence(TorusmaError):
    """A Newton run exhausted its iteration budget or stalled."""


class MassMismatch(TorusmaError):
    """Total masses of the two sides of a lambda=0 equation disagree."""


class ChainViolation(TorusmaError):
    """A monotone iteration chain inequality failed beyond tolerance."""


class ScheduleInvalid(TorusmaError):
    """A regularization schedule is not strictly decreasing / positive."""


class HypothesisFailed(TorusmaError):
    """The iteration-lemma hypothesis fails at a sampled point.

    Carries the witnessing (s, t) pair.
    """

    def __init__(self, s: float, t: float, lhs: float, rhs: float):
        self.s, self.t, self.lhs, self.rhs = s, t, lhs, rhs
        super().__init__(
            f"hypothesis t*a(s) <= B*a(s+t)^(1+delta) fails at "
            f"s={s:.6g}, t={t:.6g}: {lhs:.6g} > {rhs:.6g}"
        )


class NonMassiveSet(TorusmaError):
    """An extremal function was requested over a set of zero volume."""


class SweepStalled(TorusmaError):
    """The envelope sweep hit its iteration cap before settling."""
