"""Spectral data of a matrix polynomial: determinant roots and left Jordan chains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ChainDeficiency, RootCountMismatch
from .matpoly import MatrixPolynomial, determinant, evaluate, validate_structure


@dataclass(frozen=True)
class Root:
    value: complex
    multiplicity: int

    @property
    def is_real(self) -> bool:
        return self.value.imag == 0.0


@dataclass(frozen=True)
class EigenData:
    roots: tuple[Root, ...]
    cluster_radius: float

    @property
    def total(self) -> int:
        return sum(r.multiplicity for r in self.roots)


@dataclass(frozen=True)
class RootChains:
    """Canonical left Jordan chains at one eigenvalue.

    ``chains[j]`` is an array of shape ``(length, p)``; row ``l`` is the
    chain vector of level ``l`` (row 0 is the eigenvector).
    """

    root: complex
    chains: tuple[np.ndarray, ...]

    @property
    def partial_multiplicities(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.chains)


@dataclass(frozen=True)
class JordanChainSet:
    roots: tuple[RootChains, ...] = field(default_factory=tuple)

    @property
    def total(self) -> int:
        return sum(sum(rc.partial_multiplicities) for rc in self.roots)

    def samples(self):
        """Iterate ``(root, chain, level)`` over every sample in a fixed order."""
        for rc in self.roots:
            for chain in rc.chains:
                for level in range(chain.shape[0]):
                    yield rc.root, chain, level

    def scaled(self, factors) -> JordanChainSet:
        """Copy with chain ``k`` (flattened over roots) multiplied by ``factors[k]``."""
        factors = iter(factors)
        return JordanChainSet(
            tuple(RootChains(rc.root, tuple(c * next(factors) for c in rc.chains)) for rc in self.roots)
        )

    def to_json(self) -> list:
        return [
            {
                "root": [float(np.real(rc.root)), float(np.imag(rc.root))],
                "chains": [[[[float(z.real), float(z.imag)] for z in vec] for vec in c] for c in rc.chains],
            }
            for rc in self.roots
        ]


def det_roots(R: MatrixPolynomial, cluster_radius: float | None = None) -> EigenData:
    """Roots of ``det R(x)`` clustered into eigenvalues with multiplicities.

    The determinant is rooted through its companion matrix; roots closer
    than ``cluster_radius`` (default ``1e-6 * max(1, max|root|)``) are merged
    by single linkage, and the cluster mean is reported.
    """
    expected = validate_structure(R).det_degree
    coeffs = determinant(R)
    if coeffs.size - 1 != expected:
        raise RootCountMismatch(f"det R has degree {coeffs.size - 1}, expected {expected}")
    raw = np.roots(coeffs[::-1]) if expected > 0 else np.array([], dtype=complex)
    if cluster_radius is None:
        scale = max(1.0, float(np.max(np.abs(raw)))) if raw.size else 1.0
        cluster_radius = 1e-6 * scale
    # double roots split by about sqrt(eps); merge generously but report the radius used
    labels = list(range(raw.size))
    for i in range(raw.size):
        for j in range(i + 1, raw.size):
            if abs(raw[i] - raw[j]) < cluster_radius and labels[i] != labels[j]:
                old, new = labels[j], labels[i]
                labels = [new if lab == old else lab for lab in labels]
    groups: dict[int, list[complex]] = {}
    for lab, z in zip(labels, raw):
        groups.setdefault(lab, []).append(complex(z))
    roots = []
    for members in groups.values():
        center = complex(np.mean(members))
        if abs(center.imag) < cluster_radius:
            center = complex(center.real, 0.0)
        roots.append(Root(center, len(members)))
    roots.sort(key=lambda r: (r.value.real, r.value.imag))
    if sum(r.multiplicity for r in roots) != expected:
        raise RootCountMismatch(f"recovered {sum(r.multiplicity for r in roots)} roots, expected {expected}")
    return EigenData(tuple(roots), cluster_radius)


def _taylor_blocks(R: MatrixPolynomial, x0: complex, k: int) -> list[np.ndarray]:
    return [evaluate(R, x0, l) / math.factorial(l) for l in range(k)]


def _chain_operator(blocks: list[np.ndarray], k: int) -> np.ndarray:
    """Block upper triangular Toeplitz matrix whose left null vectors are chains.

    A row vector ``(v_0, ..., v_{k-1})`` is annihilated exactly when every
    truncated defining sum of a length-``k`` chain vanishes.
    """
    p = blocks[0].shape[0]
    T = np.zeros((k * p, k * p), dtype=complex)
    for i in range(k):
        for j in range(i, k):
            T[i * p : (i + 1) * p, j * p : (j + 1) * p] = blocks[j - i]
    return T


def _normalize_chain(chain: np.ndarray) -> np.ndarray:
    lead = chain[0]
    norm = np.max(np.abs(lead))
    first = lead[np.argmax(np.abs(lead) > 1e-8 * norm)]
    return chain * (abs(first) / first) / norm


def _chains_at(R: MatrixPolynomial, x0: complex, K: int, rank_tol: float) -> list[np.ndarray]:
    p = R.size
    blocks = _taylor_blocks(R, x0, K + 1)
    # absolute cutoff: R(x0) may be numerically zero as a whole
    scale = max(1.0, float(np.max(np.abs(R.coeffs))))
    nulls = [np.zeros((0, 0))]
    dims = [0]
    k = 0
    while dims[-1] < K:
        k += 1
        if k > K:
            raise ChainDeficiency(f"chains at {x0} reach total length {dims[-1]}, expected {K}")
        T = _chain_operator(blocks, k)
        _, sv, vh = linalg.svd(T.T)
        rank = int(np.sum(sv > rank_tol * scale))
        nulls.append(vh[rank:].conj())
        dims.append(k * p - rank)
    if dims[-1] != K:
        raise ChainDeficiency(f"chains at {x0} reach total length {dims[-1]}, expected {K}")
    kmax = k
    dims.append(dims[-1])
    chosen: list[np.ndarray] = []
    leads = np.zeros((0, p), dtype=complex)
    for level in range(kmax, 0, -1):
        n_new = (dims[level] - dims[level - 1]) - (dims[level + 1] - dims[level])
        if n_new <= 0:
            continue
        basis = nulls[level]  # rows are (v_0, ..., v_{level-1})
        lead_part = basis[:, :p]
        if leads.shape[0]:
            q, _ = np.linalg.qr(leads.T)
            lead_part = lead_part - (lead_part @ q.conj()) @ q.T
        u, _, _ = np.linalg.svd(lead_part)
        combos = u[:, :n_new].conj().T @ basis
        for row in combos:
            chain = row.reshape(level, p)
            chain = _normalize_chain(chain)
            chosen.append(chain)
            leads = np.vstack([leads, chain[:1]])
    if sum(c.shape[0] for c in chosen) != K:
        raise ChainDeficiency(f"selected chains at {x0} have total length != {K}")
    return chosen


def left_jordan_chains(R: MatrixPolynomial, eig: EigenData, rank_tol: float = 1e-8) -> JordanChainSet:
    """Canonical set of left Jordan chains at every root of ``det R``.

    The number of chains of length at least ``k`` is read off the growth of
    the left nullspace of a block Toeplitz operator; chains are taken
    longest first with leading vectors kept independent. Real roots give
    real chains and conjugate roots give conjugate chains.
    """
    out = []
    for root in eig.roots:
        if root.value.imag < 0:
            continue
        x0 = root.value.real if root.is_real else root.value
        chains = _chains_at(R, x0, root.multiplicity, rank_tol)
        if root.is_real:
            chains = [np.real_if_close(c, tol=1e6).astype(complex) for c in chains]
        out.append(RootChains(complex(x0), tuple(chains)))
        if not root.is_real:
            out.append(RootChains(complex(x0).conjugate(), tuple(c.conj() for c in chains)))
    return JordanChainSet(tuple(out))


def chain_residual(coeff_of: callable, x0: complex, chain: np.ndarray) -> float:
    """Largest defining-sum norm of ``chain`` for a polynomial given by its derivatives."""
    chain = np.atleast_2d(chain)
    derivs = [coeff_of(x0, l) / math.factorial(l) for l in range(chain.shape[0])]
    worst = 0.0
    for i in range(chain.shape[0]):
        total = sum(chain[i - l] @ derivs[l] for l in range(i + 1))
        worst = max(worst, float(np.max(np.abs(total))))
    return worst


def verify_chain(R: MatrixPolynomial, x0: complex, chain) -> float:
    """Defining residual ``max_i ||sum_{l<=i} v_{i-l} R^{(l)}(x0) / l!||_inf``."""
    return chain_residual(lambda x, l: evaluate(R, x, l), x0, np.asarray(chain))


def divisibility_check(R: MatrixPolynomial, G: MatrixPolynomial | np.ndarray, chains: JordanChainSet) -> float:
    """Chain residuals of every chain of ``R`` applied to ``G``.

    ``G`` is a matrix polynomial (or a ``(p, c, deg + 1)`` coefficient array
    of a ``p x c`` polynomial matrix). A value near zero certifies that ``R``
    is a left divisor of ``G``.
    """
    if isinstance(G, MatrixPolynomial):
        Gp = G
    else:
        Gp = MatrixPolynomial(np.moveaxis(np.asarray(G), -1, 0))
    worst = 0.0
    for rc in chains.roots:
        for chain in rc.chains:
            worst = max(worst, chain_residual(lambda x, l: evaluate(Gp, x, l), rc.root, chain))
    return worst
