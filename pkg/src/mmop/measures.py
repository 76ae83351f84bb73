"""Measure grids, their moments, and the (perturbed) moment matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import mpmath
import numpy as np

from .errors import InputError, InsufficientMomentTable, TruncationTooSmall
from .matpoly import MatrixPolynomial, shift_image

EXTENDED_DPS = 40


@dataclass(frozen=True)
class PolynomialDensity:
    """Density ``sum_k c_k x^k`` on ``support`` (the grid interval when omitted)."""

    coefficients: tuple[float, ...]
    support: tuple[float, float] | None = None

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1


@dataclass(frozen=True)
class MomentTable:
    values: tuple[float, ...]


@dataclass(frozen=True)
class Lebesgue:
    support: tuple[float, float] | None = None

    @property
    def degree(self) -> int:
        return 0


@dataclass(frozen=True)
class Jacobi:
    """``x^alpha (1 - x)^beta`` on ``[0, 1]`` with nonnegative integer exponents."""

    alpha: int = 0
    beta: int = 0

    def __post_init__(self):
        if not (isinstance(self.alpha, int) and isinstance(self.beta, int)) or self.alpha < 0 or self.beta < 0:
            raise InputError("jacobi exponents must be nonnegative integers")

    @property
    def degree(self) -> int:
        return self.alpha + self.beta


WeightSpec = Union[PolynomialDensity, MomentTable, Lebesgue, Jacobi]


def weight_from_json(data: dict) -> WeightSpec:
    kind = data.get("kind")
    support = tuple(data["support"]) if data.get("support") is not None else None
    if kind == "polynomial":
        return PolynomialDensity(tuple(float(c) for c in data["coefficients"]), support)
    if kind == "moments":
        return MomentTable(tuple(float(v) for v in data["values"]))
    if kind == "lebesgue":
        return Lebesgue(support)
    if kind == "jacobi":
        return Jacobi(int(data.get("alpha", 0)), int(data.get("beta", 0)))
    raise InputError(f"unknown weight kind {kind!r}")


def weight_to_json(spec: WeightSpec) -> dict:
    if isinstance(spec, PolynomialDensity):
        out = {"kind": "polynomial", "coefficients": list(spec.coefficients)}
    elif isinstance(spec, MomentTable):
        return {"kind": "moments", "values": list(spec.values)}
    elif isinstance(spec, Lebesgue):
        out = {"kind": "lebesgue"}
    else:
        return {"kind": "jacobi", "alpha": spec.alpha, "beta": spec.beta}
    if spec.support is not None:
        out["support"] = list(spec.support)
    return out


@dataclass(frozen=True)
class WeightGrid:
    """A ``q x p`` grid of weights on a common interval."""

    entries: tuple[tuple[WeightSpec, ...], ...]
    interval: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        entries = tuple(tuple(row) for row in self.entries)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "interval", tuple(float(v) for v in self.interval))
        lo, hi = self.interval
        if not lo < hi:
            raise InputError(f"interval must satisfy lo < hi, got {self.interval}")
        if not entries or not entries[0] or any(len(row) != len(entries[0]) for row in entries):
            raise InputError("weight grid must be a nonempty rectangle")
        for row in entries:
            for spec in row:
                s = _support(spec, self.interval)
                if isinstance(spec, Jacobi) and self.interval != (0.0, 1.0):
                    raise InputError("jacobi weights live on [0, 1]")
                if s is not None and not (lo <= s[0] < s[1] <= hi):
                    raise InputError(f"support {s} is not a subinterval of {self.interval}")

    @property
    def q(self) -> int:
        return len(self.entries)

    @property
    def p(self) -> int:
        return len(self.entries[0])

    @property
    def T(self) -> WeightGrid:
        """Transposed grid (``q`` and ``p`` swapped)."""
        return WeightGrid(tuple(zip(*self.entries)), self.interval)

    @classmethod
    def from_json(cls, data: dict) -> WeightGrid:
        return cls(
            tuple(tuple(weight_from_json(w) for w in row) for row in data["weights"]),
            tuple(data.get("interval", (-1.0, 1.0))),
        )

    def to_json(self) -> dict:
        return {"interval": list(self.interval), "weights": [[weight_to_json(w) for w in row] for row in self.entries]}


def _support(spec: WeightSpec, interval) -> tuple[float, float] | None:
    if isinstance(spec, (PolynomialDensity, Lebesgue)):
        return tuple(spec.support) if spec.support is not None else tuple(interval)
    if isinstance(spec, Jacobi):
        return (0.0, 1.0)
    return None


def _density(spec: WeightSpec):
    if isinstance(spec, PolynomialDensity):
        return lambda x: np.polynomial.polynomial.polyval(x, spec.coefficients)
    if isinstance(spec, Lebesgue):
        return np.ones_like
    if isinstance(spec, Jacobi):
        return lambda x: x**spec.alpha * (1.0 - x) ** spec.beta
    raise InputError("moment tables have no pointwise density")


def _exact_moments(spec: WeightSpec, interval, n_max: int, extended: bool) -> list:
    num = (lambda v: mpmath.mpf(v)) if extended else float
    if isinstance(spec, MomentTable):
        if len(spec.values) < n_max + 1:
            raise InsufficientMomentTable(f"moment table has {len(spec.values)} entries, need {n_max + 1}")
        return [num(v) for v in spec.values[: n_max + 1]]
    if isinstance(spec, Jacobi):
        a, b = spec.alpha, spec.beta
        return [num(1) / (num(n + a + b + 1) * math.comb(n + a + b, b)) for n in range(n_max + 1)]
    lo, hi = (num(v) for v in _support(spec, interval))
    coeffs = spec.coefficients if isinstance(spec, PolynomialDensity) else (1.0,)
    out = []
    for n in range(n_max + 1):
        total = num(0)
        for k, c in enumerate(coeffs):
            e = n + k + 1
            total += num(c) * (hi**e - lo**e) / e
        out.append(total)
    return out


def _quadrature_moments(spec: WeightSpec, interval, n_max: int) -> list:
    if isinstance(spec, MomentTable):
        return _exact_moments(spec, interval, n_max, False)
    nodes = math.ceil((n_max + spec.degree) / 2) + 1
    x, w = _gauss_legendre(nodes, _support(spec, interval))
    wx = w * _density(spec)(x)
    return [float(np.sum(wx * x**n)) for n in range(n_max + 1)]


def _gauss_legendre(nodes: int, support) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(max(nodes, 1))
    lo, hi = support
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


def moments(grid: WeightGrid, n_max: int, method: str = "exact", precision: str = "double") -> np.ndarray:
    """Moment sequences ``mu_{b,a;n}`` for ``n = 0..n_max``, shape ``(q, p, n_max + 1)``.

    ``method="exact"`` uses closed forms; ``"quadrature"`` uses Gauss-Legendre
    with ``ceil((n_max + deg)/2) + 1`` nodes. ``precision="extended"`` returns
    an object array of mpmath numbers (exact method only).
    """
    if n_max < 0:
        raise InputError("n_max must be nonnegative")
    extended = precision == "extended"
    if extended and method != "exact":
        raise InputError("extended precision is only available for exact moments")
    out = np.empty((grid.q, grid.p, n_max + 1), dtype=object if extended else float)
    with mpmath.workdps(EXTENDED_DPS):
        for b, row in enumerate(grid.entries):
            for a, spec in enumerate(row):
                if method == "exact":
                    out[b, a] = _exact_moments(spec, grid.interval, n_max, extended)
                elif method == "quadrature":
                    out[b, a] = _quadrature_moments(spec, grid.interval, n_max)
                else:
                    raise InputError(f"unknown moment method {method!r}")
    return out


def integrate(spec: WeightSpec, f, interval, degree: int) -> float:
    """``int f(x) dmu(x)`` for a polynomial ``f`` of at most ``degree``.

    ``f`` is either a coefficient array (lowest degree first) or a
    vectorized callable. Moment tables are handled through their moments,
    which needs coefficients.
    """
    if isinstance(spec, MomentTable):
        coeffs = np.asarray(f)
        mom = np.asarray(_exact_moments(spec, interval, coeffs.size - 1, False))
        return complex(np.dot(coeffs, mom)) if np.iscomplexobj(coeffs) else float(np.dot(coeffs, mom))
    func = f if callable(f) else (lambda x: np.polynomial.polynomial.polyval(x, f))
    nodes = math.ceil((degree + spec.degree + 1) / 2) + 2
    x, w = _gauss_legendre(nodes, _support(spec, interval))
    return np.sum(w * _density(spec)(x) * func(x))


@dataclass(frozen=True)
class MomentMatrix:
    """Truncated moment matrix with the grid shape used for interleaving.

    ``loss`` counts the trailing rows/columns given up by perturbations so
    that every retained entry is exact.
    """

    entries: np.ndarray
    q: int
    p: int
    loss: int = 0

    @property
    def trunc(self) -> int:
        return self.entries.shape[0]

    @property
    def extended(self) -> bool:
        return self.entries.dtype == object

    def as_float(self) -> np.ndarray:
        return self.entries.astype(float) if self.extended else self.entries

    @property
    def T(self) -> MomentMatrix:
        return MomentMatrix(self.entries.T.copy(), self.p, self.q, self.loss)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.as_float(), delimiter=",", fmt="%.17g")


def assemble(momseqs: np.ndarray, T: int) -> MomentMatrix:
    """Interleave moment sequences into the ``T x T`` moment matrix.

    Entry ``(j, k)`` is ``mu_{b,a; l+m}`` with ``j = q l + b - 1`` and
    ``k = p m + a - 1``.
    """
    q, p, count = momseqs.shape
    need = (T - 1) // q + (T - 1) // p
    if count <= need:
        raise InsufficientMomentTable(f"moments up to degree {need} needed, have {count - 1}")
    j = np.arange(T)
    l, b = np.divmod(j, q)
    m, a = np.divmod(j, p)
    entries = momseqs[b[:, None], a[None, :], l[:, None] + m[None, :]]
    return MomentMatrix(np.array(entries), q, p)


def moment_matrix(grid: WeightGrid, T: int, method: str = "exact", precision: str = "double") -> MomentMatrix:
    """Moments and assembly in one step."""
    n_max = (T - 1) // grid.q + (T - 1) // grid.p
    return assemble(moments(grid, n_max, method, precision), T)


def hankel_residual(M: MomentMatrix, relative: bool = False) -> float:
    """``max |M[j+q, k] - M[j, k+p]|``, optionally relative to ``max |M|``."""
    E = M.as_float()
    T = E.shape[0]
    diff = E[M.q :, : T - M.p] - E[: T - M.q, M.p :]
    worst = float(np.max(np.abs(diff))) if diff.size else 0.0
    if relative:
        worst /= max(float(np.max(np.abs(E))), np.finfo(float).tiny)
    return worst


def _band_product(left: np.ndarray, right: np.ndarray, s: int, N: int) -> np.ndarray:
    """``left @ right`` for a lower block-banded ``right`` (``s x s`` blocks, ``N`` block subdiagonals).

    Column ``k`` of ``right`` is nonzero only in block rows ``k//s .. k//s + N``.
    Works for float and mpmath object arrays alike.
    """
    n = right.shape[1]
    out = np.empty((left.shape[0], n), dtype=np.result_type(left, right))
    for k in range(n):
        lo = s * (k // s)
        hi = min(lo + s * (N + 1), right.shape[0])
        out[:, k] = left[:, lo:hi] @ right[lo:hi, k]
    return out


def _as_entries(R: MatrixPolynomial, s: int, T: int, extended: bool) -> np.ndarray:
    img = shift_image(R, s, T)
    if extended:
        with mpmath.workdps(EXTENDED_DPS):
            img = np.vectorize(mpmath.mpf, otypes=[object])(img)
    return img


def right_multiply(M: MomentMatrix, R: MatrixPolynomial) -> MomentMatrix:
    """Moment matrix of ``dmu R(x)``: ``M R(Lambda^T)`` truncated to exact entries."""
    p = M.p
    if R.size != p and R.size != 1:
        raise InputError(f"right perturbation must be {p}x{p}, got {R.size}x{R.size}")
    N = R.degree
    T = M.trunc
    if T < p * (N + 1):
        raise TruncationTooSmall(f"truncation {T} < p(N+1) = {p * (N + 1)}")
    img = _as_entries(R, p, T, M.extended)
    # column k needs rows through the end of block k//p + N
    keep = p * (T // p - N)
    with mpmath.workdps(EXTENDED_DPS):
        prod = _band_product(M.entries, img[:, :keep], p, N)[:keep]
    return MomentMatrix(prod, M.q, M.p, M.loss + T - keep)


def left_multiply(M: MomentMatrix, L: MatrixPolynomial) -> MomentMatrix:
    """Moment matrix of ``L(x) dmu``: ``L(Lambda) M`` truncated to exact entries."""
    return right_multiply(M.T, L.T).T


def perturbed_moments(grid: WeightGrid, poly: MatrixPolynomial, n_max: int, side: str = "right") -> np.ndarray:
    """Moments of ``dmu R(x)`` (or ``L(x) dmu``) by direct quadrature.

    Independent of the shift-operator route, so it serves as a check of
    :func:`right_multiply` and :func:`left_multiply`.
    """
    if side == "left":
        return np.transpose(perturbed_moments(grid.T, poly.T, n_max, "right"), (1, 0, 2))
    q, p = grid.q, grid.p
    out = np.zeros((q, p, n_max + 1))
    for b in range(q):
        for a in range(p):
            for abar in range(p):
                coeffs = poly.coeffs[:, abar, a] if poly.size == p else poly.coeffs[:, 0, 0] * (abar == a)
                if not np.any(coeffs):
                    continue
                spec = grid.entries[b][abar]
                for n in range(n_max + 1):
                    f = np.concatenate([np.zeros(n), coeffs])
                    out[b, a, n] += integrate(spec, f, grid.interval, f.size - 1)
    return out


def bilinear_form(spec: WeightSpec, interval, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Matrix of ``int f_i(x) g_j(x) dmu(x)`` for coefficient rows ``f_i``, ``g_j``.

    Polynomial-type weights use Gauss-Legendre with ``ceil((maxdeg + 1)/2) + 2``
    nodes, exact for the integrands; moment tables contract with a Hankel
    matrix of their moments.
    """
    left = np.atleast_2d(left)
    right = np.atleast_2d(right)
    if isinstance(spec, MomentTable):
        mom = np.asarray(_exact_moments(spec, interval, left.shape[1] + right.shape[1] - 2, False))
        i = np.arange(left.shape[1])[:, None]
        j = np.arange(right.shape[1])[None, :]
        return left @ mom[i + j] @ right.T
    maxdeg = left.shape[1] + right.shape[1] - 2 + spec.degree
    x, w = _gauss_legendre(math.ceil((maxdeg + 1) / 2) + 2, _support(spec, interval))
    V = np.vander(x, max(left.shape[1], right.shape[1]), increasing=True)
    fl = V[:, : left.shape[1]] @ left.T
    gr = V[:, : right.shape[1]] @ right.T
    return fl.T @ ((w * _density(spec)(x))[:, None] * gr)
