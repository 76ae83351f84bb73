"""Square (and, where harmless, rectangular) matrix polynomials.

A matrix polynomial ``R(x) = R_0 + R_1 x + ... + R_N x^N`` is stored as a
coefficient stack of shape ``(N + 1, rows, cols)``, lowest degree first.
Vectors of scalar polynomials (the rows/columns of the orthogonal families)
are plain 2-D arrays ``(components, degree + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import linalg

from .errors import DivisionFailure, InputError, NonRegular, StructureViolation, TruncationTooSmall

TRIM_RTOL = 1e-12


def trim_coefficients(coeffs: np.ndarray, rtol: float = TRIM_RTOL, axis: int = -1) -> np.ndarray:
    """Drop trailing (highest degree) slices along ``axis`` that are negligible.

    A slice counts as zero when every entry is below ``rtol`` times the largest
    absolute entry of the whole array. At least one slice is always kept.
    """
    coeffs = np.asarray(coeffs)
    coeffs = np.moveaxis(coeffs, axis, 0)
    scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
    keep = coeffs.shape[0]
    while keep > 1 and np.all(np.abs(coeffs[keep - 1]) <= rtol * scale):
        keep -= 1
    return np.moveaxis(coeffs[:keep], 0, axis)


@dataclass(frozen=True)
class MatrixPolynomial:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[0] == 0:
            raise InputError(f"coefficient stack must have shape (N+1, m, n), got {c.shape}")
        if not np.iscomplexobj(c):
            c = c.astype(float)
        c = trim_coefficients(c, axis=0)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def identity(cls, p: int) -> MatrixPolynomial:
        return cls(np.eye(p)[None])

    @classmethod
    def scalar(cls, coeffs) -> MatrixPolynomial:
        """1x1 polynomial from scalar coefficients, lowest degree first."""
        return cls(np.asarray(coeffs, dtype=float).reshape(-1, 1, 1))

    @classmethod
    def from_json(cls, data) -> MatrixPolynomial:
        return cls(np.asarray(data, dtype=float))

    def to_json(self) -> list:
        return np.real(self.coeffs).tolist()

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[1:]

    @property
    def size(self) -> int:
        rows, cols = self.shape
        if rows != cols:
            raise InputError(f"matrix polynomial is {rows}x{cols}, not square")
        return rows

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    @property
    def leading(self) -> np.ndarray:
        return self.coeffs[-1]

    def coefficient(self, l: int) -> np.ndarray:
        if 0 <= l <= self.degree:
            return self.coeffs[l]
        return np.zeros(self.shape, dtype=self.coeffs.dtype)

    def __call__(self, x, order: int = 0) -> np.ndarray:
        return evaluate(self, x, order)

    def derivative(self, order: int = 1) -> MatrixPolynomial:
        if order > self.degree:
            return MatrixPolynomial(np.zeros((1, *self.shape)))
        factors = np.array([math.perm(l, order) for l in range(order, self.degree + 1)], dtype=float)
        return MatrixPolynomial(self.coeffs[order:] * factors[:, None, None])

    @property
    def T(self) -> MatrixPolynomial:
        return MatrixPolynomial(np.transpose(self.coeffs, (0, 2, 1)))

    def __matmul__(self, other) -> MatrixPolynomial:
        if isinstance(other, MatrixPolynomial):
            b = other.coeffs
        else:
            b = np.asarray(other)[None]
        a = self.coeffs
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1], b.shape[2]), dtype=np.result_type(a, b))
        for i in range(a.shape[0]):
            for j in range(b.shape[0]):
                out[i + j] += a[i] @ b[j]
        return MatrixPolynomial(out)

    def __add__(self, other: MatrixPolynomial) -> MatrixPolynomial:
        n = max(self.coeffs.shape[0], other.coeffs.shape[0])
        out = np.zeros((n, *self.shape), dtype=np.result_type(self.coeffs, other.coeffs))
        out[: self.coeffs.shape[0]] += self.coeffs
        out[: other.coeffs.shape[0]] += other.coeffs
        return MatrixPolynomial(out)

    def __sub__(self, other: MatrixPolynomial) -> MatrixPolynomial:
        return self + MatrixPolynomial(-other.coeffs)


def evaluate(R: MatrixPolynomial, x, order: int = 0) -> np.ndarray:
    """``order``-th derivative of ``R`` at the scalar ``x`` (Horner)."""
    if order < 0:
        raise InputError("derivative order must be nonnegative")
    c = R.coeffs
    N = c.shape[0] - 1
    if order > N:
        return np.zeros(R.shape, dtype=np.result_type(c, x))
    acc = c[N] * math.perm(N, order)
    for l in range(N - 1, order - 1, -1):
        acc = acc * x + c[l] * math.perm(l, order)
    return np.asarray(acc)


def _det_scale(R: MatrixPolynomial) -> float:
    return max(1.0, float(np.max(np.abs(R.coeffs[:-1])))) if R.degree > 0 else 1.0


def determinant(R: MatrixPolynomial) -> np.ndarray:
    """Coefficients (lowest first) of the scalar polynomial det R(x).

    ``det R`` is sampled at ``Np + 1`` Chebyshev points of ``[-rho, rho]`` and
    interpolated, so no symbolic expansion is needed.
    """
    p = R.size
    deg = R.degree * p
    rho = _det_scale(R)
    samples = []

    def f(t):
        vals = np.array([np.linalg.det(evaluate(R, rho * ti)) for ti in np.atleast_1d(t)])
        samples.append(vals)
        return vals

    cheb = C.chebinterpolate(f, deg) if deg > 0 else np.array([f(np.array([0.0]))[0]])
    values = np.concatenate(samples)
    ref = max(1.0, max(np.linalg.norm(evaluate(R, rho * t), np.inf) for t in (-1.0, 0.0, 1.0))) ** p
    if np.all(np.abs(values) <= 1e-13 * ref):
        raise NonRegular("det R(x) vanishes at every sample point")
    mono = C.cheb2poly(cheb) if deg > 0 else cheb
    mono = np.real_if_close(mono) / rho ** np.arange(mono.size)
    return trim_coefficients(mono)


@dataclass(frozen=True)
class StructureReport:
    r: int
    satisfies_c2: bool
    det_degree: int
    violation: str | None = None


def _leading_pattern(p: int, r: int) -> np.ndarray:
    lead = np.zeros((p, p))
    lead[: p - r, r:] = np.eye(p - r)
    return lead


def validate_structure(R: MatrixPolynomial, strict: bool = True, atol: float = 1e-12) -> StructureReport:
    """Detect the rank deficiency ``r`` and check the leading-block conditions.

    The leading coefficient must be ``[[0, I_{p-r}], [0, 0]]`` and, when
    ``r > 0``, the lower-left ``r x r`` block of the subleading coefficient
    must be the identity. With ``strict`` a violation raises; otherwise it is
    reported with ``satisfies_c2=False``.
    """
    p = R.size
    N = R.degree

    def fail(message, block):
        if strict:
            raise StructureViolation(message, block)
        return StructureReport(r=0, satisfies_c2=False, det_degree=-1, violation=message)

    if N == 0:
        if np.allclose(R.coeffs[0], np.eye(p), rtol=0, atol=atol):
            return StructureReport(r=0, satisfies_c2=True, det_degree=0)
        return fail("degree-0 perturbation must be the identity", "leading")
    lead = R.leading
    r = p - int(round(np.sum(np.abs(lead) > atol)))
    if not 0 <= r <= p - 1 or not np.allclose(lead, _leading_pattern(p, r), rtol=0, atol=atol):
        return fail("leading coefficient is not of the form [[0, I_(p-r)], [0, 0]]", "leading")
    if r > 0:
        sub = R.coefficient(N - 1)[p - r :, :r]
        if not np.allclose(sub, np.eye(r), rtol=0, atol=atol):
            return fail(f"lower-left {r}x{r} block of the subleading coefficient is not the identity", "subleading")
    return StructureReport(r=r, satisfies_c2=True, det_degree=N * p - r)


def shift_image(R: MatrixPolynomial, s: int, trunc: int) -> np.ndarray:
    """``trunc x trunc`` section of ``R(Lambda_[s]^T)``.

    Block ``(i, j)`` is ``R_{i-j}`` for ``0 <= i - j <= N``: a lower
    block-Toeplitz band. A 1x1 ``R`` acts blockwise as ``R_l * I_s``.
    """
    rows, cols = R.shape
    if rows != cols:
        raise InputError("shift image needs a square matrix polynomial")
    if rows == 1 and s != 1:
        blocks = np.einsum("l,ij->lij", R.coeffs[:, 0, 0], np.eye(s))
    elif rows == s:
        blocks = R.coeffs
    else:
        raise InputError(f"block size {s} does not match polynomial size {rows}")
    N = R.degree
    if trunc < s * (N + 1):
        raise TruncationTooSmall(f"truncation {trunc} < s(N+1) = {s * (N + 1)}")
    nb = -(-trunc // s)
    out = np.zeros((nb * s, nb * s), dtype=blocks.dtype)
    for i in range(nb):
        for l in range(min(N, i) + 1):
            j = i - l
            out[i * s : (i + 1) * s, j * s : (j + 1) * s] = blocks[l]
    return out[:trunc, :trunc]


def poly_vector_product(R: MatrixPolynomial, Q: np.ndarray) -> np.ndarray:
    """Coefficients of ``R(x) Q(x)`` for a column ``Q`` of scalar polynomials."""
    Q = np.atleast_2d(Q)
    N = R.degree
    dq = Q.shape[1] - 1
    out = np.zeros((R.shape[0], N + dq + 1), dtype=np.result_type(R.coeffs, Q))
    for l in range(N + 1):
        out[:, l : l + dq + 1] += R.coeffs[l] @ Q
    return out


def left_divide(R: MatrixPolynomial, G, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Solve ``R(x) Q(x) = G(x)`` for a column ``Q`` of scalar polynomials.

    ``G`` has shape ``(p, deg + 1)``. The quotient degree is bounded by
    ``deg G - (N - 1)`` (clamped at 0) because the leading coefficient of
    ``R`` may be rank deficient. Coefficients are matched in a dense system
    solved with a column-pivoted QR least-squares solver.

    Returns the quotient and the largest absolute coefficient mismatch.
    Raises :class:`DivisionFailure` when that mismatch exceeds
    ``tol * max(1, max|G|)``.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    p = R.size
    if G.shape[0] != p:
        raise InputError(f"expected {p} component polynomials, got {G.shape[0]}")
    N = R.degree
    if N == 0 and np.array_equal(R.coeffs[0], np.eye(p)):
        return trim_coefficients(G.copy()), 0.0
    dg = G.shape[1] - 1
    dq = max(dg - (N - 1), 0)
    E = max(N + dq, dg) + 1
    A = np.zeros((p * E, p * (dq + 1)))
    for l in range(N + 1):
        for d in range(dq + 1):
            # row block: coefficient degree l + d of every component
            A[(l + d) :: E, d :: dq + 1][:p, :p] += R.coeffs[l]
    rhs = np.zeros((p, E))
    rhs[:, : dg + 1] = G
    rhs = rhs.reshape(-1)
    sol, *_ = linalg.lstsq(A, rhs, lapack_driver="gelsy")
    Q = sol.reshape(p, dq + 1)
    residual = float(np.max(np.abs(A @ sol - rhs))) if rhs.size else 0.0
    if residual > tol * max(1.0, float(np.max(np.abs(G)))):
        raise DivisionFailure(f"R(x) does not left-divide G(x): residual {residual:.3e}", residual)
    return trim_coefficients(Q), residual
