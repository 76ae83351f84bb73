"""Christoffel formulas for matrix-polynomial perturbations of a biorthogonal system.

Everything here is driven by the table of Jordan-sampled values of the
unperturbed ``A`` family: the tau determinants, the banded connection matrix
``Omega`` and the perturbed families ``Bhat``, ``Ahat``. Nothing in this module
touches the perturbed moment matrix; that is the oracle's job.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExistenceFailure, MMOPError, SingularSystem
from .families import OrthoFamily, chain_samples, poly_values
from .matpoly import MatrixPolynomial, evaluate, left_divide, validate_structure
from .spectral import JordanChainSet, chain_residual, det_roots, left_jordan_chains

log = logging.getLogger(__name__)

TAU_TOL = 1e-9
IMAG_TOL = 1e-8


@dataclass(frozen=True)
class SampleTable:
    """Jordan-sampled values of the ``A`` family, one row per chain level.

    ``raw`` holds the complex samples in chain order. ``values`` is
    ``transform @ raw``, where rows of conjugate roots are traded for their
    real and imaginary parts so that every determinant is real.
    """

    raw: np.ndarray
    values: np.ndarray
    transform: np.ndarray
    labels: tuple[tuple[complex, int, int], ...]

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def count(self) -> int:
        return self.values.shape[1]


def _realifier(chains: JordanChainSet) -> np.ndarray:
    sizes = [sum(rc.partial_multiplicities) for rc in chains.roots]
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    m = int(starts[-1])
    Tr = np.eye(m, dtype=complex)
    i = 0
    while i < len(chains.roots):
        z = chains.roots[i].root
        if z.imag != 0 and i + 1 < len(chains.roots) and chains.roots[i + 1].root == z.conjugate():
            for k in range(sizes[i]):
                r, c = starts[i] + k, starts[i + 1] + k
                Tr[r, r], Tr[r, c] = 0.5, 0.5
                Tr[c, r], Tr[c, c] = -0.5j, 0.5j
            i += 2
        else:
            i += 1
    return Tr


def sample_table(fam: OrthoFamily, chains: JordanChainSet, n_hi: int | None = None) -> SampleTable:
    """Rows ``sum_{l<=lev} v_{lev-l} A_n^{(l)}(x0) / l!`` for ``n < n_hi``."""
    count = fam.count if n_hi is None else min(n_hi, fam.count)
    rows, labels = [], []
    for rc in chains.roots:
        for j, chain in enumerate(rc.chains):
            rows.append(chain_samples(fam, rc.root, chain)[:, :count])
            labels.extend((rc.root, j, lev) for lev in range(chain.shape[0]))
    raw = np.vstack(rows) if rows else np.zeros((0, count), dtype=complex)
    Tr = _realifier(chains)
    return SampleTable(raw, Tr @ raw, Tr, tuple(labels))


def _real_det(block: np.ndarray) -> float:
    if block.shape[0] == 0:
        return 1.0
    d = np.linalg.det(block)
    bound = float(np.prod(np.linalg.norm(block, axis=0))) or 1.0
    if abs(d.imag) > IMAG_TOL * max(abs(d), bound * 1e-8):
        raise MMOPError(f"tau determinant has imaginary part {d.imag:.3e} (value {d:.3e})")
    return float(d.real)


def tau(table: SampleTable, n: int) -> float:
    """Determinant of the sampled columns ``n .. n + m - 1`` (``1`` when ``m = 0``)."""
    m = table.m
    if n + m > table.count:
        raise ExistenceFailure(f"sample table has {table.count} columns, tau_{n} needs {n + m}", n)
    return _real_det(table.values[:, n : n + m])


def _hadamard(block: np.ndarray) -> float:
    return float(np.prod(np.linalg.norm(block, axis=0))) if block.size else 1.0


def omega_column(table: SampleTable, n: int) -> np.ndarray:
    """Entries ``Omega_{n+1..n+m, n}`` from the sampled connection equations.

    Sampling ``A(x) Omega = R(x) Ahat(x)`` with every chain annihilates the
    right-hand side, leaving ``sum_k table[:, k] Omega_{k,n} = 0`` with
    ``Omega_{n,n} = 1``.
    """
    m = table.m
    if m == 0:
        return np.zeros(0)
    if n + m + 1 > table.count:
        raise ExistenceFailure(f"omega column {n} needs {n + m + 1} sampled columns", n)
    block = table.values[:, n + 1 : n + m + 1]
    # the previous window sets the scale, so a uniformly tiny column still counts as zero
    scale = max(_hadamard(block), _hadamard(table.values[:, n : n + m]))
    if abs(np.linalg.det(block)) <= 1e-13 * scale:
        raise SingularSystem(f"sampled system for column {n} is singular (tau_{n + 1} = 0)", n + 1)
    try:
        sol = np.linalg.solve(block, -table.values[:, n])
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"sampled system for column {n} is singular", n + 1) from exc
    return _checked_real(sol)


def _checked_real(v: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0
    if v.size and np.max(np.abs(v.imag)) > IMAG_TOL * scale:
        raise MMOPError(f"expected a real result, imaginary part {np.max(np.abs(v.imag)):.3e}")
    return np.real(v).copy()


def tau_consistency(table: SampleTable, n: int, column: np.ndarray | None = None) -> float:
    """``|Omega_{n+m,n} - (-1)^m tau_n / tau_{n+1}|`` relative to the ratio."""
    m = table.m
    if m == 0:
        return 0.0
    column = omega_column(table, n) if column is None else column
    ratio = (-1) ** m * tau(table, n) / tau(table, n + 1)
    return abs(column[-1] - ratio) / max(abs(ratio), np.finfo(float).tiny)


def minor_without(table: SampleTable, n: int, drop: int) -> float:
    """Determinant of columns ``n .. n + m`` with column ``drop`` removed."""
    cols = [k for k in range(n, n + table.m + 1) if k != drop]
    return _real_det(table.values[:, cols])


def superscript_conventions(table: SampleTable, n: int, column: np.ndarray | None = None) -> dict[str, float]:
    """Mismatch of three readings of the Cramer ratios against the solved column.

    For ``i = 0..m-1`` the entry ``Omega_{n+1+i,n}`` is compared with
    ``(-1)^{i+1} tau^{(k)} / tau_{n+1}`` where ``tau^{(k)}`` drops column
    ``n + k`` of the columns ``n .. n+m`` and

    * ``"drop_n+i"``: ``k = i``
    * ``"drop_n+1+i"``: ``k = i + 1``
    * ``"reversed"``: ``k = m - 1 - i``
    """
    m = table.m
    column = omega_column(table, n) if column is None else column
    denom = tau(table, n + 1)
    choices = {"drop_n+i": lambda i: i, "drop_n+1+i": lambda i: i + 1, "reversed": lambda i: m - 1 - i}
    out = {}
    for name, pick in choices.items():
        worst = 0.0
        for i in range(m):
            pred = (-1) ** (i + 1) * minor_without(table, n, n + pick(i)) / denom
            worst = max(worst, abs(column[i] - pred) / max(abs(column[i]), abs(pred), 1e-300))
        out[name] = worst
    return out


def perturbed_B(table: SampleTable, fam: OrthoFamily, n: int) -> np.ndarray:
    """``Bhat_{n-1}`` from the sampled-kernel determinant, shape ``(q, deg + 1)``.

    The determinant ``det[K | table[:, n .. n+m-2]] / tau_{n-1}`` is expanded
    along the kernel column. Since ``K[s](y) = sum_{i<n} table[s, i] B_i(y)``,
    the result is ``sum_i c_i B_i(y)`` with scalar weights ``c``.
    """
    m = table.m
    if n < 1:
        raise ExistenceFailure("perturbed B index must be >= 0", n - 1)
    if m == 0:
        return fam.B[n - 1].copy()
    t_prev = tau(table, n - 1)
    rest = table.values[:, n : n + m - 1]
    cofactors = np.array(
        [(-1) ** s * _real_det(np.delete(rest, s, axis=0)) for s in range(m)], dtype=float
    )
    if abs(t_prev) == 0.0:
        raise ExistenceFailure(f"tau_{n - 1} vanishes", n - 1)
    weights = _checked_real(cofactors @ table.values[:, :n]) / t_prev
    return np.einsum("i,ibd->bd", weights, fam.B[:n])


def product_coefficients(table: SampleTable, n: int) -> np.ndarray:
    """Weights ``w_k`` with ``[R Ahat]_n = sum_k w_k A_{n+k}``, ``k = 0..m``.

    Cofactor expansion of ``det[[A_n .. A_{n+m}]; table[:, n .. n+m]] / tau_{n+1}``
    along its polynomial row.
    """
    m = table.m
    t_next = tau(table, n + 1)
    if t_next == 0.0:
        raise ExistenceFailure(f"tau_{n + 1} vanishes", n + 1)
    return np.array([(-1) ** k * minor_without(table, n, n + k) for k in range(m + 1)]) / t_next


def perturbed_A(table: SampleTable, fam: OrthoFamily, R: MatrixPolynomial, n: int, tol: float = 1e-9):
    """Product ``G_n = [R Ahat]_n`` and the quotient ``Ahat_n = R^{-1} G_n``.

    Returns ``(G, quotient, division_residual)`` with ``G`` and ``quotient``
    of shape ``(p, deg + 1)``; the residual is relative to ``max(1, max|G|)``.
    """
    w = product_coefficients(table, n)
    G = np.einsum("k,kad->ad", w, fam.A[n : n + table.m + 1])
    G = _trim_columns(G)
    Q, res = left_divide(R, G, tol=tol)
    return G, Q, res / max(1.0, float(np.max(np.abs(G))))


def _trim_columns(G: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    scale = np.max(np.abs(G)) if G.size else 0.0
    keep = G.shape[-1]
    while keep > 1 and np.all(np.abs(G[..., keep - 1]) <= rtol * scale):
        keep -= 1
    return G[..., :keep]


@dataclass(frozen=True)
class TauSequence:
    values: np.ndarray
    flags: np.ndarray

    @property
    def first_flag(self) -> int | None:
        idx = np.flatnonzero(self.flags)
        return int(idx[0]) if idx.size else None

    def to_json(self) -> dict:
        return {"values": self.values.tolist(), "flags": [int(i) for i in np.flatnonzero(self.flags)]}


def existence_scan(table: SampleTable, n_max: int, tau_tol: float = TAU_TOL) -> TauSequence:
    """``tau_n`` for ``n <= n_max`` with zero flags.

    ``tau_n`` is flagged when ``|tau_n|`` is below ``tau_tol`` times the
    geometric mean of the magnitudes of its neighbours.
    """
    last = min(n_max, table.count - table.m)
    vals = np.array([tau(table, n) for n in range(last + 1)])
    mags = np.abs(vals)
    flags = np.zeros(vals.size, dtype=bool)
    for n in range(vals.size):
        nbrs = [mags[k] for k in (n - 1, n + 1) if 0 <= k < vals.size and mags[k] > 0]
        ref = math.exp(np.mean(np.log(nbrs))) if nbrs else 1.0
        flags[n] = mags[n] <= tau_tol * ref
    return TauSequence(vals, flags)


@dataclass
class ConnectionData:
    """Output of the Christoffel pipeline.

    ``omega_band[n]`` holds ``Omega_{n+1..n+m, n}``; ``A_hat`` and ``H_hat``
    cover indices ``< count_A``, ``B_hat`` covers indices ``< count_B``.
    """

    q: int
    p: int
    m: int
    r: int
    tau: TauSequence
    omega_band: np.ndarray
    B_hat: np.ndarray
    A_hat: np.ndarray
    H_hat: np.ndarray
    products: list
    chains: JordanChainSet
    residuals: dict = field(default_factory=dict)
    conventions: dict = field(default_factory=dict)
    side: str = "right"
    omega_left: np.ndarray | None = None

    @property
    def count_A(self) -> int:
        return self.A_hat.shape[0]

    @property
    def count_B(self) -> int:
        return self.B_hat.shape[0]

    def omega_matrix(self, size: int | None = None) -> np.ndarray:
        """Dense banded unit lower triangular ``Omega`` (square, from the solved columns)."""
        size = self.count_A if size is None else min(size, self.count_A)
        Om = np.eye(size)
        for n in range(size):
            for i in range(self.m):
                if n + 1 + i < size:
                    Om[n + 1 + i, n] = self.omega_band[n, i]
        return Om

    def to_json(self) -> dict:
        def table(coeffs):
            return [[row.tolist() for row in entry] for entry in coeffs]

        out = {
            "side": self.side,
            "q": self.q,
            "p": self.p,
            "det_degree": self.m,
            "rank_deficiency": self.r,
            "tau": self.tau.to_json(),
            "omega_band": self.omega_band.tolist(),
            "B_hat": table(self.B_hat),
            "A_hat": table(self.A_hat),
            "H_hat": self.H_hat.tolist(),
            "chains": self.chains.to_json(),
            "residuals": {k: float(v) for k, v in sorted(self.residuals.items())},
            "superscript_conventions": {k: float(v) for k, v in sorted(self.conventions.items())},
        }
        if self.omega_left is not None:
            out["omega_left"] = self.omega_left.tolist()
        return out


def interleaved_leading(coeffs: np.ndarray, n: int, s: int) -> float:
    """Coefficient of degree ``n // s`` in component ``n % s`` (the normalizing entry)."""
    d = n // s
    return float(coeffs[n % s, d]) if d < coeffs.shape[1] else 0.0


def _pad_stack(polys: list[np.ndarray], width: int | None = None) -> np.ndarray:
    if not polys:
        return np.zeros((0, 1, 1))
    width = width or max(P.shape[1] for P in polys)
    out = np.zeros((len(polys), polys[0].shape[0], width))
    for i, P in enumerate(polys):
        out[i, :, : P.shape[1]] = P
    return out


def perturb_right(
    fam: OrthoFamily,
    R: MatrixPolynomial,
    chains: JordanChainSet | None = None,
    count: int | None = None,
    tau_tol: float = TAU_TOL,
    rank_tol: float = 1e-8,
    division_tol: float = 1e-9,
    check_points: int = 10,
    seed: int = 0,
) -> ConnectionData:
    """Christoffel pipeline for ``dmu -> dmu R(x)``.

    ``count`` caps the number of perturbed indices (default: as many as the
    unperturbed family supports, ``fam.count - m``). Indices whose formulas
    need a flagged tau are not computed; the flags are reported in ``tau``.
    """
    if R.size != fam.p:
        raise MMOPError(f"right perturbation must be {fam.p}x{fam.p}")
    report = validate_structure(R)
    m, r = report.det_degree, report.r
    if chains is None:
        chains = left_jordan_chains(R, det_roots(R), rank_tol) if m > 0 else JordanChainSet()
    if chains.total != m:
        raise MMOPError(f"chains cover {chains.total} samples, expected {m}")
    table = sample_table(fam, chains)
    limit = fam.count - m
    if count is not None:
        limit = min(limit, count)
    if limit < 1:
        raise MMOPError("unperturbed family too short for this perturbation")
    taus = existence_scan(table, limit, tau_tol)
    flag = taus.first_flag
    count_A = limit if flag is None else min(limit, max(flag - 1, 0))
    count_B = limit if flag is None else min(limit, flag)
    if flag is not None:
        log.info("tau_%d flagged; perturbed family exists only below index %d", flag, flag)

    band = np.zeros((count_A, m))
    products, quotients, div_res, consist = [], [], [], []
    conventions: dict[str, float] = {}
    for n in range(count_A):
        band[n] = omega_column(table, n)
        if m:
            consist.append(tau_consistency(table, n, band[n]))
            for k, v in superscript_conventions(table, n, band[n]).items():
                conventions[k] = max(conventions.get(k, 0.0), v)
        G, Q, res = perturbed_A(table, fam, R, n, division_tol)
        products.append(G)
        quotients.append(Q)
        div_res.append(res)
    A_hat = _pad_stack(quotients)
    if m == 0:
        # R = I: nothing is perturbed
        H_hat = fam.H[:count_A].copy()
    else:
        H_hat = np.array([1.0 / interleaved_leading(A_hat[n], n, fam.p) for n in range(count_A)])
    B_hat = _pad_stack([perturbed_B(table, fam, n) for n in range(1, count_B + 1)], fam.B.shape[2])
    cd = ConnectionData(
        q=fam.q, p=fam.p, m=m, r=r, tau=taus, omega_band=band, B_hat=B_hat, A_hat=A_hat,
        H_hat=H_hat, products=products, chains=chains, conventions=conventions,
    )
    G_stack = _pad_stack(products)
    cd.residuals.update(
        division=max(div_res, default=0.0),
        tau_consistency=max(consist, default=0.0),
        inheritance=inheritance_residual(chains, G_stack),
        omega_vs_products=_omega_product_mismatch(cd, fam),
    )
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1.0, 1.0, check_points)
    cd.residuals["connection_A"] = connection_A_residual(fam, cd, R, xs)
    cd.residuals["connection_B"] = connection_B_residual(fam, cd, xs)
    return cd


def inheritance_residual(chains: JordanChainSet, G_stack: np.ndarray) -> float:
    """Chain residuals of ``A(x) Omega`` columns, relative to their size.

    Every column is ``R(x) Ahat_n(x)``, so every left chain of ``R`` must
    annihilate it; this certifies divisibility before any division.
    """
    if G_stack.shape[0] == 0 or chains.total == 0:
        return 0.0
    # (count, p, deg) -> p x count matrix polynomial
    coeffs = np.transpose(G_stack, (2, 1, 0))
    G = MatrixPolynomial(coeffs)
    worst = 0.0
    for rc in chains.roots:
        scale = max(1.0, abs(rc.root)) ** (coeffs.shape[0] - 1)
        for chain in rc.chains:
            res = chain_residual(lambda x, l: evaluate(G, x, l), rc.root, chain)
            colscale = max(1.0, float(np.max(np.abs(coeffs)))) * scale
            worst = max(worst, res / colscale)
    return worst


def _omega_product_mismatch(cd: ConnectionData, fam: OrthoFamily) -> float:
    """Determinant-expansion products versus ``sum_k A_k Omega_{k,n}`` from the solve."""
    worst = 0.0
    for n, G in enumerate(cd.products):
        direct = fam.A[n].copy()
        for i in range(cd.m):
            direct = direct + cd.omega_band[n, i] * fam.A[n + 1 + i]
        width = max(direct.shape[1], G.shape[1])
        a = np.zeros((fam.p, width))
        b = np.zeros((fam.p, width))
        a[:, : direct.shape[1]] = direct
        b[:, : G.shape[1]] = G
        worst = max(worst, float(np.max(np.abs(a - b))) / max(1.0, float(np.max(np.abs(a)))))
    return worst


def connection_A_residual(fam: OrthoFamily, cd: ConnectionData, R: MatrixPolynomial, xs) -> float:
    """``max ||A(x) Omega - R(x) Ahat(x)||`` over columns ``< count_A``, relative."""
    worst = 0.0
    for x in xs:
        Ax = fam.A_values(x)  # (count, p)
        Ahx = poly_values(cd.A_hat, x)  # (count_A, p)
        Rx = evaluate(R, x)
        for n in range(cd.count_A):
            lhs = Ax[n] + cd.omega_band[n] @ Ax[n + 1 : n + 1 + cd.m]
            rhs = Rx @ Ahx[n]
            scale = max(1.0, float(np.max(np.abs(Ax[n : n + 1 + cd.m]))))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return worst


def connection_B_residual(fam: OrthoFamily, cd: ConnectionData, xs) -> float:
    """``max ||Omega Bhat(x) - B(x)||`` over rows whose band is fully computed, relative."""
    rows = min(cd.count_A, cd.count_B)
    worst = 0.0
    for x in xs:
        Bx = fam.B_values(x)
        Bhx = poly_values(cd.B_hat, x)
        for j in range(rows):
            total = Bhx[j].copy()
            for c in range(max(0, j - cd.m), j):
                total = total + cd.omega_band[c, j - c - 1] * Bhx[c]
            scale = max(1.0, float(np.max(np.abs(Bx[j]))))
            worst = max(worst, float(np.max(np.abs(total - Bx[j]))) / scale)
    return worst


def kernel_connection_residual(
    fam: OrthoFamily, cd: ConnectionData, R: MatrixPolynomial, n: int, x: float, y: float
) -> float:
    """Residual of ``R(x) Khat^[n](x,y) = K^[n](x,y) + sum A_k(x) Omega_{k,c} Bhat_c(y)``.

    The correction sums over ``k = n .. n+m-1`` and ``c = max(0, k-m) .. n-1``.
    Kernels are ``p x q`` matrices ``sum_{i<n} A_i(x) B_i(y)^T``. Returns the
    residual relative to ``max(1, |K^[n](x,y)|)``.
    """
    m = cd.m
    if n > cd.count_A or n > cd.count_B:
        raise MMOPError(f"kernel connection at n={n} needs more perturbed indices")
    Ax = fam.A_values(x)
    By = fam.B_values(y)
    Ahx = poly_values(cd.A_hat, x)
    Bhy = poly_values(cd.B_hat, y)
    K = Ax[:n].T @ By[:n]
    Khat = Ahx[:n].T @ Bhy[:n]
    corr = np.zeros_like(K)
    for k in range(n, n + m):
        for c in range(max(0, k - m), n):
            corr += cd.omega_band[c, k - c - 1] * np.outer(Ax[k], Bhy[c])
    lhs = evaluate(R, x) @ Khat
    return float(np.max(np.abs(lhs - K - corr))) / max(1.0, float(np.max(np.abs(K))))


# ---------------------------------------------------------------- left side


def transposed_family(fam: OrthoFamily) -> OrthoFamily:
    """Family of the transposed grid: ``B' = H A`` and ``A' = B / H``."""
    return OrthoFamily(fam.p, fam.q, fam.A * fam.H[:, None, None], fam.B / fam.H[:, None, None], fam.H.copy())


def left_tau_check(fam: OrthoFamily, cd_transposed: ConnectionData, table_t: SampleTable) -> float:
    """Compare left taus from ``B``-samples with ``tau' * prod H`` (relative)."""
    m = cd_transposed.m
    if m == 0:
        return 0.0
    # B samples with the chains of L^T: the transposed A samples times H_n
    values = table_t.values * fam.H[None, : table_t.count]
    worst = 0.0
    for n, t in enumerate(cd_transposed.tau.values):
        direct = _real_det(values[:, n : n + m])
        pred = t * float(np.prod(fam.H[n : n + m]))
        worst = max(worst, abs(direct - pred) / max(abs(pred), 1e-300))
    return worst


def perturb_left(fam: OrthoFamily, L: MatrixPolynomial, **kwargs) -> ConnectionData:
    """Christoffel pipeline for ``dmu -> L(x) dmu`` by transposition.

    The transposed grid has ``q`` and ``p`` swapped; the right pipeline runs
    there with ``R = L^T`` and the results are mapped back:
    ``Bhat_n = Hhat'_n Ahat'_n``, ``Ahat_n = Bhat'_n / Hhat'_n`` and the left
    connection matrix (``Bhat L = Omega_left B``) is ``Hhat Omega'^T H^{-1}``.
    """
    if L.size != fam.q:
        raise MMOPError(f"left perturbation must be {fam.q}x{fam.q}")
    fam_t = transposed_family(fam)
    cd_t = perturb_right(fam_t, L.T, **kwargs)
    count = min(cd_t.count_A, cd_t.count_B)
    Hh = cd_t.H_hat[:count]
    B_hat = cd_t.A_hat[:count] * Hh[:, None, None]
    A_hat = cd_t.B_hat[:count] / Hh[:, None, None]
    Om_t = cd_t.omega_matrix(count)
    omega_left = (Hh[:, None] * Om_t.T) / fam.H[None, :count]
    cd = ConnectionData(
        q=fam.q, p=fam.p, m=cd_t.m, r=cd_t.r, tau=cd_t.tau, omega_band=cd_t.omega_band[:count],
        B_hat=B_hat, A_hat=A_hat, H_hat=Hh, products=cd_t.products[:count], chains=cd_t.chains,
        residuals=dict(cd_t.residuals), conventions=dict(cd_t.conventions), side="left", omega_left=omega_left,
    )
    cd.residuals["left_tau"] = left_tau_check(fam, cd_t, sample_table(fam_t, cd_t.chains))
    return cd
