"""The biorthogonal families A, B read off a Gauss-Borel factorization.

``B_n^{(b)}(x) = sum_l S[n, q l + b - 1] x^l`` and
``A_n^{(a)}(x) = sum_m Sbar[n, p m + a - 1] x^m / H_n``. Coefficient arrays
have shape ``(count, components, degree + 1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gaussborel import Factorization
from .matpoly import TRIM_RTOL
from .measures import WeightGrid, bilinear_form


def _interleave(rows: np.ndarray, blocks: int) -> np.ndarray:
    """``(n, T)`` rows to ``(n, blocks, ceil(T/blocks))`` component coefficients."""
    n, T = rows.shape
    width = -(-T // blocks)
    padded = np.zeros((n, width * blocks), dtype=rows.dtype)
    padded[:, :T] = rows
    return padded.reshape(n, width, blocks).transpose(0, 2, 1).copy()


def poly_values(coeffs: np.ndarray, x, order: int = 0) -> np.ndarray:
    """Evaluate (a derivative of) polynomials stored along the last axis."""
    c = np.moveaxis(coeffs, -1, 0)
    for _ in range(order):
        c = np.polynomial.polynomial.polyder(c, axis=0) if c.shape[0] > 1 else np.zeros_like(c)
    return np.polynomial.polynomial.polyval(x, c)


def degree_of(coeffs: np.ndarray, rtol: float = TRIM_RTOL) -> int:
    """Trimmed degree of one coefficient vector (``-1`` for the zero polynomial)."""
    mags = np.abs(coeffs)
    if not np.any(mags):
        return -1
    nz = np.nonzero(mags > rtol * mags.max())[0]
    return int(nz[-1])


@dataclass(frozen=True)
class OrthoFamily:
    q: int
    p: int
    B: np.ndarray
    A: np.ndarray
    H: np.ndarray

    @property
    def count(self) -> int:
        return self.H.size

    def B_values(self, x) -> np.ndarray:
        """``(count, q)`` values ``B_n^{(b)}(x)``."""
        return poly_values(self.B, x)

    def A_values(self, x, order: int = 0) -> np.ndarray:
        """``(count, p)`` values of the ``order``-th derivative of ``A_n^{(a)}`` at ``x``."""
        return poly_values(self.A, x, order)

    def truncated(self, count: int) -> OrthoFamily:
        return OrthoFamily(self.q, self.p, self.B[:count], self.A[:count], self.H[:count])

    def to_csv(self, path, which: str = "B") -> None:
        coeffs = self.B if which == "B" else self.A
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for n in range(coeffs.shape[0]):
                for c in range(coeffs.shape[1]):
                    deg = degree_of(coeffs[n, c])
                    writer.writerow([n, c + 1, deg] + [f"{v:.17g}" for v in coeffs[n, c, : max(deg, 0) + 1]])


def build_family(F: Factorization, q: int, p: int) -> OrthoFamily:
    """Families ``B = S X_[q]`` and ``A = X_[p]^T Sbar^T H^{-1}``."""
    B = _interleave(F.S, q)
    A = _interleave(F.Sbar, p) / F.H[:, None, None]
    return OrthoFamily(q, p, B, A, F.H.copy())


def pairing(fam: OrthoFamily, grid: WeightGrid, upto: int) -> np.ndarray:
    """``G[n, m] = int sum_{b,a} B_n^{(b)} dmu_{b,a} A_m^{(a)}`` for ``n, m < upto``."""
    G = np.zeros((upto, upto))
    for b in range(fam.q):
        for a in range(fam.p):
            G += bilinear_form(grid.entries[b][a], grid.interval, fam.B[:upto, b], fam.A[:upto, a])
    return G


def biorthogonality_residual(fam: OrthoFamily, grid: WeightGrid, upto: int) -> float:
    """``max |int B_n dmu A_m - delta_{nm}|`` over ``n, m < upto``."""
    upto = min(upto, fam.count)
    return float(np.max(np.abs(pairing(fam, grid, upto) - np.eye(upto))))


@dataclass(frozen=True)
class QuasiDiagonalReport:
    """Residual of the quasi-diagonal relations and the literal-range exceptions.

    ``residual`` covers the ranges on which the relations hold exactly
    (interleaved index strictly below ``n``). ``flagged`` lists the entries
    ``(side, n, component, l, value)`` that the ceiling-formula ranges
    ``ceil((n - c + 2)/s) - 1`` include but which sit on the diagonal, where
    the value is ``1`` (A side) or ``H_n`` (B side) rather than ``0``.
    """

    residual: float
    flagged: tuple[tuple[str, int, int, int, float], ...]


def _literal_top(n: int, c: int, s: int) -> int:
    return math.ceil((n - c + 2) / s) - 1


def quasidiag_report(fam: OrthoFamily, grid: WeightGrid, upto: int) -> QuasiDiagonalReport:
    upto = min(upto, fam.count)
    q, p = fam.q, fam.p
    worst = 0.0
    flagged = []
    if upto == 0:
        return QuasiDiagonalReport(0.0, ())
    # A side: int x^l sum_a dmu_{b,a} A_n^{(a)}, interleaved row j = q l + b - 1
    lmax = max(_literal_top(upto - 1, 1, q), 0) + 1
    mono = np.eye(lmax)
    for b in range(q):
        vals = sum(bilinear_form(grid.entries[b][a], grid.interval, mono, fam.A[:upto, a]) for a in range(p))
        for n in range(upto):
            for l in range(max(_literal_top(n, b + 1, q) + 1, 0)):
                v = float(vals[l, n])
                if q * l + b < n:
                    worst = max(worst, abs(v))
                else:
                    flagged.append(("A", n, b + 1, l, v))
    lmax = max(_literal_top(upto - 1, 1, p), 0) + 1
    mono = np.eye(lmax)
    for a in range(p):
        vals = sum(bilinear_form(grid.entries[b][a], grid.interval, fam.B[:upto, b], mono) for b in range(q))
        for n in range(upto):
            for l in range(max(_literal_top(n, a + 1, p) + 1, 0)):
                v = float(vals[n, l])
                if p * l + a < n:
                    worst = max(worst, abs(v))
                else:
                    flagged.append(("B", n, a + 1, l, v))
    return QuasiDiagonalReport(worst, tuple(flagged))


def quasidiag_residual(fam: OrthoFamily, grid: WeightGrid, upto: int) -> float:
    return quasidiag_report(fam, grid, upto).residual


@dataclass(frozen=True)
class RecurrenceData:
    """Recurrence matrix ``J`` with ``J B(x) = x B(x)`` and its checks."""

    matrix: np.ndarray
    off_band: float
    residual: float


def recurrence_matrix(F: Factorization, q: int, p: int, fam: OrthoFamily | None = None, samples=None) -> RecurrenceData:
    """``S Lambda_[q] S^{-1}`` restricted to the rows/columns unaffected by truncation.

    The eigen-relation residual is measured at ``samples`` (10 points in
    ``[-1, 1]`` by default) over rows whose stencil stays inside the matrix,
    relative to ``max |x B(x)|``.
    """
    T = F.trunc
    shift = np.eye(T, k=q)
    J = np.linalg.solve(F.S.T, (F.S @ shift).T).T
    keep = T - q
    J = J[:keep, :keep]
    j, k = np.indices(J.shape)
    outside = (k - j > q) | (j - k > p)
    off_band = float(np.max(np.abs(J[outside]))) if outside.any() else 0.0
    fam = fam or build_family(F, q, p)
    if samples is None:
        samples = np.linspace(-1.0, 1.0, 10)
    rows = max(keep - q, 0)
    worst = 0.0
    for x in samples:
        Bx = fam.B_values(x)[:keep]
        lhs = J[:rows] @ Bx
        rhs = x * Bx[:rows]
        scale = max(1.0, float(np.max(np.abs(rhs)))) if rows else 1.0
        if rows:
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return RecurrenceData(J, off_band, worst)


def chain_samples(fam: OrthoFamily, root: complex, chain: np.ndarray) -> np.ndarray:
    """Jordan-sampled values ``sum_{l<=lev} v_{lev-l} A_n^{(l)}(x0) / l!``.

    Returns shape ``(len(chain), count)``: one row per chain level.
    """
    chain = np.atleast_2d(chain)
    derivs = [fam.A_values(root, l) / math.factorial(l) for l in range(chain.shape[0])]
    out = np.zeros((chain.shape[0], fam.count), dtype=complex)
    for level in range(chain.shape[0]):
        for l in range(level + 1):
            out[level] += derivs[l] @ chain[level - l]
    return out


@dataclass(frozen=True)
class KernelSlice:
    """Per chain level, the ``q`` polynomials in ``y`` of a sampled kernel.

    ``coeffs`` has shape ``(levels, q, degree + 1)``.
    """

    n: int
    coeffs: np.ndarray

    def values(self, y) -> np.ndarray:
        return poly_values(self.coeffs, y)


def kernel_slice(fam: OrthoFamily, n: int, root: complex, chain) -> KernelSlice:
    """``sum_{i<n} [sampled A_i] B_i^{(b)}(y)`` for every chain level."""
    weights = chain_samples(fam, root, np.asarray(chain, dtype=complex))[:, :n]
    coeffs = np.einsum("li,ibd->lbd", weights, fam.B[:n])
    return KernelSlice(n, coeffs)


def coefficient_matrix(coeffs: np.ndarray, size: int | None = None) -> np.ndarray:
    """Undo the interleaving: ``(n, s, d)`` component coefficients to ``(n, size)`` rows."""
    n, s, d = coeffs.shape
    size = n if size is None else size
    rows = coeffs.transpose(0, 2, 1).reshape(n, s * d)
    out = np.zeros((n, size))
    k = min(size, rows.shape[1])
    out[:, :k] = rows[:, :k]
    return out
