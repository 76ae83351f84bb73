"""Ground truth by direct factorization of the perturbed moment matrix.

Shares the moment and factorization layers with the formula path but none of
its Christoffel machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .families import OrthoFamily, build_family, coefficient_matrix
from .gaussborel import PIVOT_TOL, Factorization, factorize
from .matpoly import MatrixPolynomial
from .measures import MomentMatrix, left_multiply, right_multiply


def direct_perturbed(
    M: MomentMatrix, R: MatrixPolynomial, side: str = "right", pivot_tol: float = PIVOT_TOL, precision: str | None = None
) -> tuple[Factorization, OrthoFamily]:
    """Factorize ``M R(Lambda^T)`` (right) or ``L(Lambda) M`` (left) from scratch.

    Raises
    ------
    QuasidefiniteFailure
        When the perturbed matrix is not quasi-definite up to its truncation.
    """
    if side == "right":
        Mh = right_multiply(M, R)
    elif side == "left":
        Mh = left_multiply(M, R)
    else:
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    F = factorize(Mh, pivot_tol, precision)
    return F, build_family(F, M.q, M.p)


def _relative_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per index ``max |a_n - b_n| / max |b_n|`` over padded coefficient tables."""
    count = min(a.shape[0], b.shape[0])
    width = max(a.shape[-1], b.shape[-1])
    out = np.zeros(count)
    for n in range(count):
        x = np.zeros((a.shape[1], width))
        y = np.zeros((b.shape[1], width))
        x[:, : a.shape[-1]] = a[n]
        y[:, : b.shape[-1]] = b[n]
        out[n] = np.max(np.abs(x - y)) / max(float(np.max(np.abs(y))), np.finfo(float).tiny)
    return out


def _normalized(coeffs: np.ndarray, s: int) -> np.ndarray:
    out = coeffs.copy()
    for n in range(coeffs.shape[0]):
        d = n // s
        lead = coeffs[n, n % s, d] if d < coeffs.shape[2] else 0.0
        out[n] = coeffs[n] / lead if lead != 0 else np.nan
    return out


@dataclass
class ComparisonReport:
    B_hat: np.ndarray
    A_hat: np.ndarray
    A_hat_raw: np.ndarray
    H_hat: np.ndarray
    omega: float
    omega_off_band: float
    count: int
    tolerances: dict = field(default_factory=dict)

    @property
    def worst(self) -> dict[str, float]:
        def mx(v):
            return float(np.max(v)) if np.size(v) else 0.0

        return {
            "B_hat": mx(self.B_hat),
            "A_hat": mx(self.A_hat),
            "A_hat_raw": mx(self.A_hat_raw),
            "H_hat": mx(self.H_hat),
            "omega": self.omega,
            "omega_off_band": self.omega_off_band,
        }

    @property
    def passed(self) -> dict[str, bool]:
        w = self.worst
        return {k: bool(w[k] <= tol) for k, tol in self.tolerances.items() if k in w}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_json(self) -> dict:
        return {
            "count": self.count,
            "per_index": {
                "B_hat": self.B_hat.tolist(),
                "A_hat": self.A_hat.tolist(),
                "A_hat_raw": self.A_hat_raw.tolist(),
                "H_hat": self.H_hat.tolist(),
            },
            "worst": self.worst,
            "tolerances": dict(self.tolerances),
            "passed": self.passed,
        }

    def text(self) -> str:
        lines = [f"{'quantity':<16}{'worst':>14}{'tolerance':>14}  status"]
        for k, v in self.worst.items():
            tol = self.tolerances.get(k)
            status = "" if tol is None else ("pass" if v <= tol else "FAIL")
            tol_s = "" if tol is None else f"{tol:.1e}"
            lines.append(f"{k:<16}{v:>14.3e}{tol_s:>14}  {status}")
        return "\n".join(lines)


DEFAULT_TOLERANCES = {"B_hat": 1e-6, "A_hat": 1e-6, "H_hat": 1e-6, "omega": 1e-8, "omega_off_band": 1e-8}


def compare(cd, direct: tuple[Factorization, OrthoFamily], fam: OrthoFamily, tolerances: dict | None = None) -> ComparisonReport:
    """Formula-path output versus the direct factorization.

    ``Bhat`` is compared raw (both sides are monic), ``Ahat`` after dividing
    each index by its interleaved leading coefficient (and raw, for the
    record), ``Hhat`` relatively, and ``Omega`` against ``S Shat^{-1}``
    (right) or ``Hhat Sbarhat^{-T} Sbar^T H^{-1}`` (left).
    """
    F_hat, fam_hat = direct
    q, p = fam.q, fam.p
    count = min(cd.count_A, cd.count_B, fam_hat.count)
    B_rel = _relative_rows(cd.B_hat[:count], fam_hat.B[:count])
    A_rel = _relative_rows(_normalized(cd.A_hat[:count], p), _normalized(fam_hat.A[:count], p))
    A_raw = _relative_rows(cd.A_hat[:count], fam_hat.A[:count])
    H_rel = np.abs(cd.H_hat[:count] - fam_hat.H[:count]) / np.abs(fam_hat.H[:count])

    size = min(F_hat.trunc, fam.count)
    if cd.side == "right":
        S = coefficient_matrix(fam.B, size)[:size]
        oracle = np.linalg.solve(F_hat.S[:size, :size].T, S.T).T
        formula = cd.omega_matrix(size)
        k = formula.shape[0]
        i, j = np.indices(oracle.shape)
        band = (i - j >= 0) & (i - j <= cd.m)
        off = float(np.max(np.abs(oracle[~band]))) if (~band).any() else 0.0
        scale = max(1.0, float(np.max(np.abs(oracle[:k, :k]))))
        omega = float(np.max(np.abs(oracle[:k, :k] - formula))) / scale
    else:
        Sbar = coefficient_matrix(fam.A * fam.H[:, None, None], size)[:size]
        base = np.linalg.solve(F_hat.Sbar[:size, :size].T, Sbar.T).T
        oracle = (F_hat.H[:size, None] * base.T) / fam.H[None, :size]
        formula = cd.omega_left
        k = min(formula.shape[0], size)
        i, j = np.indices(oracle.shape)
        band = (j - i >= 0) & (j - i <= cd.m)
        off = float(np.max(np.abs(oracle[~band]) / np.maximum(1.0, np.abs(oracle).max()))) if (~band).any() else 0.0
        scale = max(1.0, float(np.max(np.abs(oracle[:k, :k]))))
        omega = float(np.max(np.abs(oracle[:k, :k] - formula[:k, :k]))) / scale
    return ComparisonReport(
        B_rel, A_rel, A_raw, H_rel, omega, off, count, dict(DEFAULT_TOLERANCES if tolerances is None else tolerances)
    )
