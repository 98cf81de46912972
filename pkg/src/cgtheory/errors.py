"""Semantic exception hierarchy with stable error codes.

Every domain failure maps to one subclass of :class:`CgError`; the CLI
translates the ``code`` attribute into its diagnostic line and exit status 1.
Usage errors (bad flags, malformed values) are left to the CLI layer and exit
with status 2.
"""

from __future__ import annotations


class CgError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "domain-error"


class ValidationError(CgError, ValueError):
    """Structurally malformed input (shape, range, or type contract)."""

    code = "validation"


class ZeroMassCell(CgError):
    """A conditional distribution was requested for a cell with zero mass."""

    code = "zero-mass-cell"


class ExplosionGuard(CgError):
    """An enumeration would exceed the configured cap."""

    code = "explosion-guard"

    def __init__(self, message: str, count: int | None = None, cap: int | None = None):
        super().__init__(message)
        self.count = count
        self.cap = cap


class InfiniteKL(CgError):
    """KL divergence is infinite because absolute continuity fails."""

    code = "infinite-kl"


class DegenerateGap(CgError):
    """The population support/unknown gap is (numerically) zero, so the
    finite-sample ratio it normalizes is undefined."""

    code = "degenerate-gap"


class NotIdentifiable(CgError):
    """More than one factor-map decomposition is consistent with the data."""

    code = "not-identifiable"

    def __init__(self, message: str, witnesses: tuple = ()):
        super().__init__(message)
        self.witnesses = tuple(witnesses)


class Inconsistent(CgError):
    """Independently recovered factor maps (or synthesis routes) conflict."""

    code = "inconsistent"


class Unreachable(CgError):
    """An unknown cell has no support anchor reachable via recovered maps."""

    code = "unreachable"


class CollisionError(CgError):
    """A generator produced overlapping supports, which valid tasks forbid."""

    code = "collision"


class UnsupportedCombination(CgError):
    """The learner kind cannot run against the given space or inputs."""

    code = "unsupported-combination"


class SkeletonMismatch(CgError):
    """Two rules (or spaces) that must share a skeleton do not."""

    code = "skeleton-mismatch"
