"""Sparse propagation operators, hypergraph Laplacians and heat-kernel wavelet bases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator
from scipy.special import iv

from ..core.exceptions import NumericError, OverflowGuardError, ShapeError, SpectralCapError
from ..core.logging import get_logger
from ..models.domain import Hypergraph, WaveletBasis

_log = get_logger(__name__)

SYMMETRY_TOL = 1e-12
# Largest s * lambda_max the exact inverse kernel e^{s lambda} may see.
OVERFLOW_GUARD = 30.0


@dataclass(frozen=True)
class SparseOperator:
    """Square CSR matrix with a checked symmetry flag."""

    matrix: sp.csr_matrix
    symmetric: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ShapeError(f"operator must be square, got {m.shape}")
        m.sum_duplicates()
        m.sort_indices()
        if self.symmetric:
            asym = abs(m - m.T)
            if asym.nnz and asym.max() > SYMMETRY_TOL:
                raise ValueError("operator flagged symmetric but A != A^T")
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def T(self) -> SparseOperator:
        if self.symmetric:
            return self
        return SparseOperator(self.matrix.T.tocsr())

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return spmm(self, x)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def spmm(a: SparseOperator | sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """Exact sparse-dense product."""
    m = a.matrix if isinstance(a, SparseOperator) else a
    x = np.asarray(x, dtype=np.float64)
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: operator {m.shape} vs matrix {x.shape}")
    return np.asarray(m @ x)


def propagation_operator(hg: Hypergraph) -> SparseOperator:
    """P = Dv^-1/2 H We De^-1 H^T Dv^-1/2, with zero rows for isolated nodes."""
    h = hg.incidence
    w = hg.edge_weights
    if hg.n_edges == 0:
        return SparseOperator(sp.csr_matrix((hg.n_nodes, hg.n_nodes)), symmetric=True)
    edge_deg = np.asarray(h.sum(axis=0)).ravel()
    node_deg = np.asarray(h @ w).ravel()

    with np.errstate(divide="ignore"):
        dv = 1.0 / np.sqrt(node_deg)
    dv[~np.isfinite(dv)] = 0.0

    left = sp.diags(dv) @ h @ sp.diags(w / edge_deg)
    p = left @ h.T @ sp.diags(dv)
    p = sp.csr_matrix(p)
    # Round-off can leave the product a hair off symmetric.
    p = ((p + p.T) * 0.5).tocsr()
    return SparseOperator(p, symmetric=True)


def hypergraph_laplacian(hg: Hypergraph) -> SparseOperator:
    """Normalized hypergraph Laplacian I - P (PSD, spectrum in [0, 1])."""
    p = propagation_operator(hg).matrix
    lap = sp.identity(hg.n_nodes, format="csr") - p
    return SparseOperator(((lap + lap.T) * 0.5).tocsr(), symmetric=True)


def eig_sym(lap: SparseOperator, max_exact_n: int = 5000) -> tuple[np.ndarray, np.ndarray]:
    """Dense symmetric eigendecomposition, eigenvalues ascending."""
    n = lap.shape[0]
    if n > max_exact_n:
        raise SpectralCapError(
            f"Operator has {n} nodes, above spectral.max_exact_n={max_exact_n}; "
            "set wavelet.mode = 'chebyshev'"
        )
    if not lap.symmetric:
        raise ValueError("eig_sym requires a symmetric operator")
    evals, evecs = scipy.linalg.eigh(lap.toarray())
    _log.debug("eigendecomposition", n=n, lambda_min=float(evals[0]), lambda_max=float(evals[-1]))
    return evals, evecs


def wavelet_basis(eigs: tuple[np.ndarray, np.ndarray], scale: float) -> WaveletBasis:
    """Theta = U diag(e^{-s lambda}) U^T and its exact inverse U diag(e^{s lambda}) U^T."""
    if scale <= 0:
        raise ValueError("wavelet scale must be positive")
    evals, evecs = eigs
    evals = np.clip(evals, 0.0, None)
    lam_max = float(evals[-1]) if evals.size else 0.0
    if scale * lam_max > OVERFLOW_GUARD:
        raise OverflowGuardError(
            f"scale * lambda_max = {scale * lam_max:.3g} exceeds {OVERFLOW_GUARD}; "
            "use a smaller wavelet.scale"
        )
    theta = (evecs * np.exp(-scale * evals)) @ evecs.T
    theta_inv = (evecs * np.exp(scale * evals)) @ evecs.T
    return WaveletBasis(
        theta=theta, theta_inv=theta_inv, scale=scale, eigenvalues=evals, mode="exact"
    )


def estimate_lambda_max(lap: SparseOperator, iters: int = 100, seed: int = 0) -> float:
    """Largest eigenvalue by power iteration (PSD operators)."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(lap.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = lap.matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        lam = float(v @ w)
        v = w / norm
    return lam


def chebyshev_coefficients(scale: float, order: int, lambda_max: float) -> np.ndarray:
    """Coefficients of e^{-s x} on [0, lambda_max] in the shifted Chebyshev basis.

    With x = a(1 + t), a = lambda_max / 2: e^{-s x} = e^{-s a} [I_0(-s a) + 2 sum_k I_k(-s a) T_k(t)].
    """
    a = lambda_max / 2.0
    k = np.arange(order)
    coeffs = np.exp(-scale * a) * iv(k, -scale * a)
    coeffs[1:] *= 2.0
    return coeffs


def chebyshev_apply(
    lap: SparseOperator,
    scale: float,
    order: int,
    x: np.ndarray,
    lambda_max: float | None = None,
) -> np.ndarray:
    """Apply e^{-s L} to ``x`` with an ``order``-term Chebyshev expansion.

    A negative ``scale`` gives the inverse kernel e^{|s| L}.
    """
    if order < 1:
        raise ValueError("chebyshev order must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if lambda_max is None:
        lambda_max = 1.01 * estimate_lambda_max(lap)
    if lambda_max <= 0.0:
        # Zero operator: e^{-s 0} = I.
        return x.copy()

    coeffs = chebyshev_coefficients(scale, order, lambda_max)
    a = lambda_max / 2.0
    m = lap.matrix

    def shifted(v):
        return (m @ v - a * v) / a

    t_prev = x
    out = coeffs[0] * t_prev
    if order > 1:
        t_curr = shifted(x)
        out = out + coeffs[1] * t_curr
        for c in coeffs[2:]:
            t_next = 2.0 * shifted(t_curr) - t_prev
            out = out + c * t_next
            t_prev, t_curr = t_curr, t_next

    if not np.all(np.isfinite(out)):
        raise NumericError("chebyshev_apply produced non-finite values")
    return out


def _symmetric_operator(n: int, fn) -> LinearOperator:
    return LinearOperator(
        (n, n),
        matvec=lambda v: fn(v.reshape(-1, 1)).ravel(),
        rmatvec=lambda v: fn(v.reshape(-1, 1)).ravel(),
        matmat=fn,
        rmatmat=fn,
        dtype=np.float64,
    )


def chebyshev_basis(
    lap: SparseOperator, scale: float, order: int, lambda_max: float = 1.0
) -> WaveletBasis:
    """Wavelet basis whose theta / theta_inv are applied by Chebyshev expansion.

    The normalized Laplacian has spectrum in [0, 1], so the bound defaults to 1.
    """
    if scale * lambda_max > OVERFLOW_GUARD:
        raise OverflowGuardError(
            f"scale * lambda_max = {scale * lambda_max:.3g} exceeds {OVERFLOW_GUARD}; "
            "use a smaller wavelet.scale"
        )
    n = lap.shape[0]
    theta = _symmetric_operator(n, lambda x: chebyshev_apply(lap, scale, order, x, lambda_max))
    theta_inv = _symmetric_operator(n, lambda x: chebyshev_apply(lap, -scale, order, x, lambda_max))
    return WaveletBasis(
        theta=theta,
        theta_inv=theta_inv,
        scale=scale,
        eigenvalues=None,
        mode="chebyshev",
        cheb_order=order,
    )


def build_basis(
    hg: Hypergraph,
    scale: float,
    mode: str = "auto",
    cheb_order: int = 10,
    max_exact_n: int = 5000,
) -> WaveletBasis:
    """Wavelet basis of a channel hypergraph; ``auto`` picks exact below the cap."""
    lap = hypergraph_laplacian(hg)
    if mode == "auto":
        mode = "exact" if hg.n_nodes <= max_exact_n else "chebyshev"
    if mode == "exact":
        return wavelet_basis(eig_sym(lap, max_exact_n), scale)
    return chebyshev_basis(lap, scale, cheb_order)
