"""Gauss-Borel (unpivoted LU) factorization of a moment matrix.

The factorization is ``M = S^{-1} H Sbar^{-T}`` with unit lower triangular
``S``, ``Sbar`` and diagonal ``H``. Pivoting is deliberately absent: a row
exchange would break the normalization that defines the polynomial families,
so a vanishing pivot is reported as a failure of quasi-definiteness.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import mpmath
import numpy as np

from .errors import QuasidefiniteFailure
from .measures import EXTENDED_DPS, MomentMatrix

PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class Factorization:
    S: np.ndarray
    Sbar: np.ndarray
    H: np.ndarray
    precision: str = "double"

    @property
    def trunc(self) -> int:
        return self.H.size

    def reconstruct(self) -> np.ndarray:
        """``S^{-1} H Sbar^{-T}``."""
        Sinv = np.linalg.inv(self.S)
        return Sinv @ np.diag(self.H) @ np.linalg.inv(self.Sbar).T

    def to_csv(self, directory, prefix: str = "") -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, arr in (("S", self.S), ("Sbar", self.Sbar), ("H", self.H[None, :])):
            path = directory / f"{prefix}{name}.csv"
            np.savetxt(path, arr, delimiter=",", fmt="%.17g")
            paths.append(path)
        return paths


def _magnitude(x) -> float:
    return float(abs(x))


def _eliminate(M: np.ndarray, pivot_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-operation accumulator ``S`` with ``S M`` upper triangular, and its diagonal.

    Written without dtype assumptions so that mpmath object arrays go
    through the same code as float arrays.
    """
    n = M.shape[0]
    U = M.copy()
    S = np.zeros_like(M)
    one = U.dtype.type(1) if U.dtype != object else mpmath.mpf(1)
    for i in range(n):
        S[i, i] = one
    for k in range(n):
        scale = max(_magnitude(v) for v in U[k:, k:].ravel())
        pivot = U[k, k]
        if scale == 0.0 or _magnitude(pivot) <= pivot_tol * scale:
            raise QuasidefiniteFailure(k, float(pivot), scale)
        if k + 1 == n:
            break
        factors = U[k + 1 :, k] / pivot
        U[k + 1 :, k:] -= np.outer(factors, U[k, k:])
        S[k + 1 :, : k + 1] -= np.outer(factors, S[k, : k + 1])
    return S, np.diagonal(U).copy()


def factorize(M: MomentMatrix | np.ndarray, pivot_tol: float = PIVOT_TOL, precision: str | None = None) -> Factorization:
    """Doolittle elimination of ``M`` and ``M^T`` without pivoting.

    ``precision="extended"`` runs the elimination in mpmath at
    ``EXTENDED_DPS`` digits (the default when ``M`` already holds mpmath
    entries). The factors are returned in double precision either way.
    ``H`` is the mean of the pivots of both eliminations, which makes the
    result transposition-equivariant: ``factorize(M.T)`` is exactly
    ``(Sbar, S, H)``.

    Raises
    ------
    QuasidefiniteFailure
        At the first pivot ``k`` with ``|pivot| <= pivot_tol * max|Schur complement|``.
    """
    entries = M.entries if isinstance(M, MomentMatrix) else np.asarray(M)
    if precision is None:
        precision = "extended" if entries.dtype == object else "double"
    if precision == "extended":
        with mpmath.workdps(EXTENDED_DPS):
            work = entries if entries.dtype == object else np.vectorize(mpmath.mpf, otypes=[object])(entries)
            S, H = _eliminate(work, pivot_tol)
            Sbar, Hbar = _eliminate(work.T.copy(), pivot_tol)
            H = (H + Hbar) / 2
        S, Sbar, H = S.astype(float), Sbar.astype(float), H.astype(float)
    else:
        work = np.asarray(entries, dtype=float)
        S, H = _eliminate(work, pivot_tol)
        Sbar, Hbar = _eliminate(work.T.copy(), pivot_tol)
        H = (H + Hbar) / 2
    return Factorization(S, Sbar, H, precision)


def residual(F: Factorization, M: MomentMatrix | np.ndarray) -> float:
    """``max |S M Sbar^T - diag(H)|`` relative to ``max |M|``."""
    entries = M.as_float() if isinstance(M, MomentMatrix) else np.asarray(M, dtype=float)
    scale = max(float(np.max(np.abs(entries))), np.finfo(float).tiny)
    return float(np.max(np.abs(F.S @ entries @ F.Sbar.T - np.diag(F.H)))) / scale
