"""Built-in examples used by the tests and by ``mmop demo``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matpoly import MatrixPolynomial
from .measures import Lebesgue, PolynomialDensity, WeightGrid


@dataclass(frozen=True)
class Fixture:
    name: str
    grid: WeightGrid
    perturbation: MatrixPolynomial
    side: str = "right"


def legendre_grid() -> WeightGrid:
    return WeightGrid(((Lebesgue(),),), (-1.0, 1.0))


def shifted_identity_pencil(b: float) -> MatrixPolynomial:
    """3x3 degree-1 perturbation with a double eigenvalue ``b^3/8``.

    Leading coefficient is the upper shift; the constant term is
    ``[[b^2/4, 0, 0], [0, b^2/4, 0], [1, b, b^2/4]]``.
    """
    c = b * b / 4
    R0 = np.array([[c, 0.0, 0.0], [0.0, c, 0.0], [1.0, b, c]])
    R1 = np.eye(3, k=1)
    return MatrixPolynomial(np.stack([R0, R1]))


def monomial_grid() -> WeightGrid:
    """``q=1, p=3`` grid ``x^{a-1}`` on ``[0, 1]`` (not quasi-definite beyond order 3)."""
    return WeightGrid(((PolynomialDensity((1.0,)), PolynomialDensity((0.0, 1.0)), PolynomialDensity((0.0, 0.0, 1.0))),), (0.0, 1.0))


def angelesco_grid(pieces: int = 3, orientation: str = "row") -> WeightGrid:
    """Lebesgue weights on ``pieces`` adjacent subintervals of ``[-1, 1]``."""
    cuts = np.linspace(-1.0, 1.0, pieces + 1)
    weights = tuple(Lebesgue((float(cuts[i]), float(cuts[i + 1]))) for i in range(pieces))
    entries = (weights,) if orientation == "row" else tuple((w,) for w in weights)
    return WeightGrid(entries, (-1.0, 1.0))


def f1(b: float = 2.0) -> Fixture:
    """Legendre weight with the scalar perturbation ``x - b``."""
    return Fixture("f1", legendre_grid(), MatrixPolynomial.scalar([-b, 1.0]))


def f2(b: float = 2.0) -> Fixture:
    """Three-piece Angelesco grid (``q=1, p=3``) with the double-eigenvalue pencil."""
    return Fixture("f2", angelesco_grid(3, "row"), shifted_identity_pencil(b))


def f3(b: float = 2.0, c: float = 0.0) -> Fixture:
    """Two-piece Angelesco grid (``q=2, p=1``) with a genuine 2x2 left perturbation.

    ``L(x) = [[1, 1], [c, b]] + [[0, 0], [1, 0]] x``, whose transpose has the
    required leading pattern with ``r = 1``; ``det L = b - c - x``.
    """
    L0 = np.array([[1.0, 1.0], [c, b]])
    L1 = np.array([[0.0, 0.0], [1.0, 0.0]])
    return Fixture("f3", angelesco_grid(2, "column"), MatrixPolynomial(np.stack([L0, L1])), side="left")


FIXTURES = {"f1": f1, "f2": f2, "f3": f3}
