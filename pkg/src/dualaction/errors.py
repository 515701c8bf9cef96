"""Exception hierarchy for numerical failures.

Every named failure mode of the solvers maps to one exception class, so
callers (and the CLI exit-code logic) can tell configuration errors apart
from genuine numerical breakdowns.
"""


class DualActionError(Exception):
    """Base class for all numerical errors raised by this package."""


class NewtonDivergence(DualActionError):
    """A Newton solve failed to reach its residual target within the
    iteration cap.  For Fenchel solves this usually signals a violated
    convexity bound."""


class ConvexityLoss(DualActionError):
    """An assembled Hessian failed positive-definiteness at audit samples."""


class SpectrumUnavailable(DualActionError):
    """No closed-characteristic spectrum oracle exists for the domain and
    on-the-fly computation is disabled."""


class NonzeroMean(DualActionError):
    """An operation requiring a zero-mean loop received one with mean."""


class BadModeSupport(DualActionError):
    """A loop has Fourier modes outside the support required by the caller."""


class NotCritical(DualActionError):
    """A loop handed to a critical-point-only operation has a gradient
    residual above tolerance."""


class LiftInconsistent(DualActionError):
    """The translation recovered when lifting a dual critical point is not
    constant along the loop to tolerance."""


class CoercivityViolation(DualActionError):
    """The tail minimization met a direction of nonpositive curvature;
    the head cutoff N or tail truncation M is misconfigured."""


class TailSingular(DualActionError):
    """The tail block of the dual Hessian is numerically singular, which
    contradicts the coercivity bound (configuration error)."""


class WindowTooSmall(DualActionError):
    """Eigenvalue counts near the spectral window edge changed when the
    Fourier cutoff was doubled."""


class DegeneratePath(DualActionError):
    """A symplectic path fails the endpoint nondegeneracy margin, so its
    Conley-Zehnder index is undefined here."""


class DegenerateOrbit(DualActionError):
    """An orbit has positive nullity in a run declared nondegenerate."""


class NoConvergence(DualActionError):
    """A search iteration failed to converge (logged per seed, not fatal)."""


class OnlyConstantFound(DualActionError):
    """Global dual minimization collapsed to the constant loop from every
    start; the seeding is bad and should be retried with larger circles."""


class BadSign(DualActionError):
    """A quantity required to be negative (or positive) had the wrong sign."""


class NoConsensus(DualActionError):
    """Independent capacity runs disagree beyond tolerance."""

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)


class NonConvergentFlow(DualActionError):
    """A gradient-flow trajectory left the configured bounding region
    without resolving, flagging a Palais-Smale audit failure."""


class BasinInstability(DualActionError):
    """Connecting-orbit counts changed under mesh refinement, flagging a
    Morse-Smale failure; retry with a different metric perturbation."""


class MissingMinimum(DualActionError):
    """The filtered complex has no index-0 generator in the expected
    low-action window."""
