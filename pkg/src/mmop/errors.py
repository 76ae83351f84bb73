"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class MMOPError(Exception):
    """Base class for all library errors."""


class InputError(MMOPError):
    """Malformed or inconsistent input (bad shapes, bad config)."""


class NonRegular(MMOPError):
    """det R(x) vanishes identically."""


class StructureViolation(InputError):
    """Leading/subleading coefficients do not have the required block pattern."""

    def __init__(self, message: str, block: str | None = None):
        super().__init__(message)
        self.block = block


class TruncationTooSmall(InputError):
    pass


class InsufficientMomentTable(InputError):
    pass


class DivisionFailure(MMOPError):
    """Coefficient matching for R(x) Q(x) = G(x) left a residual above tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class RootCountMismatch(MMOPError):
    pass


class ChainDeficiency(MMOPError):
    pass


class ExistenceFailure(MMOPError):
    """The perturbed family does not exist at some index (a vanishing tau)."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class SingularSystem(ExistenceFailure):
    """The sampled-value system for one column of Omega is singular."""


class QuasidefiniteFailure(MMOPError):
    """A leading principal minor of a moment matrix vanishes.

    ``index`` is the 0-based pivot that broke down, i.e. the minor of
    order ``index + 1``.
    """

    def __init__(self, index: int, pivot: float, scale: float):
        super().__init__(
            f"pivot {index} is {pivot:.3e} (scale {scale:.3e}); "
            f"leading minor of order {index + 1} vanishes"
        )
        self.index = index
        self.pivot = pivot
        self.scale = scale
