"""
Tests for propagation operators, Laplacians and wavelet bases.
"""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from app.core.exceptions import OverflowGuardError, ShapeError, SpectralCapError
from app.utils.sparse import (
    SparseOperator,
    build_basis,
    chebyshev_apply,
    chebyshev_basis,
    eig_sym,
    estimate_lambda_max,
    hypergraph_laplacian,
    propagation_operator,
    spmm,
    wavelet_basis,
)
from tests.conftest import make_hypergraph, random_hypergraph


class TestSparseOperator:
    """Test suite for the CSR wrapper and spmm."""

    def test_spmm_matches_dense(self):
        rng = np.random.default_rng(0)
        a = sp.random(6, 6, density=0.4, random_state=1, format="csr")
        x = rng.standard_normal((6, 3))
        np.testing.assert_allclose(spmm(SparseOperator(a), x), a.toarray() @ x, atol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            spmm(SparseOperator(sp.identity(3, format="csr")), np.ones((4, 2)))

    def test_symmetric_flag_is_checked(self):
        with pytest.raises(ValueError):
            SparseOperator(sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]])), symmetric=True)


class TestPropagation:
    """Test suite for the normalized propagation operator."""

    def test_two_nodes_one_edge(self):
        """One shared hyperedge averages the pair."""
        p = propagation_operator(make_hypergraph([[1], [1]]))
        np.testing.assert_allclose(p.toarray(), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_symmetric_with_spectrum_in_unit_interval(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            p = propagation_operator(random_hypergraph(12, rng)).toarray()
            np.testing.assert_allclose(p, p.T, atol=1e-12)
            evals = np.linalg.eigvalsh(p)
            assert evals.min() > -1e-10
            assert evals.max() < 1 + 1e-10

    def test_isolated_node_has_zero_row(self):
        hg = make_hypergraph([[1], [1], [0]])
        p = propagation_operator(hg).toarray()
        np.testing.assert_array_equal(p[2], 0.0)
        lap = hypergraph_laplacian(hg).toarray()
        assert lap[2, 2] == 1.0

    def test_no_edges_gives_identity_laplacian(self):
        hg = make_hypergraph(np.zeros((3, 0)))
        np.testing.assert_array_equal(hypergraph_laplacian(hg).toarray(), np.eye(3))


class TestWaveletBasis:
    """Test suite for the exact and Chebyshev heat-kernel bases."""

    def test_two_node_spectrum(self):
        """Theta has eigenvalues e^0 and e^-1 for the two-node Laplacian."""
        basis = build_basis(make_hypergraph([[1], [1]]), scale=1.0, mode="exact")
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(basis.theta)), [math.exp(-1), 1.0], atol=1e-12)
        np.testing.assert_allclose(basis.eigenvalues, [0.0, 1.0], atol=1e-12)

    def test_inverse_identity_on_random_hypergraphs(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(3, 51))
            basis = build_basis(random_hypergraph(n, rng), scale=1.0, mode="exact")
            assert np.abs(basis.theta @ basis.theta_inv - np.eye(n)).max() < 1e-8

    def test_eigendecomposition_is_orthonormal(self):
        rng = np.random.default_rng(1)
        lap = hypergraph_laplacian(random_hypergraph(20, rng))
        evals, evecs = eig_sym(lap)
        assert np.all(np.diff(evals) >= -1e-12)
        assert np.abs(evecs.T @ evecs - np.eye(20)).max() < 1e-8
        assert np.abs((evecs * evals) @ evecs.T - lap.toarray()).max() < 1e-6

    def test_spectral_cap(self):
        lap = hypergraph_laplacian(make_hypergraph(np.ones((6, 1))))
        with pytest.raises(SpectralCapError) as exc:
            eig_sym(lap, max_exact_n=5)
        assert exc.value.exit_code == 2

    def test_overflow_guard(self):
        hg = make_hypergraph([[1], [1]])
        with pytest.raises(OverflowGuardError):
            build_basis(hg, scale=40.0, mode="exact")

    def test_bad_scale(self):
        lap = hypergraph_laplacian(make_hypergraph([[1], [1]]))
        with pytest.raises(ValueError):
            wavelet_basis(eig_sym(lap), scale=0.0)

    def test_auto_mode_switches_at_cap(self):
        rng = np.random.default_rng(2)
        hg = random_hypergraph(10, rng)
        assert build_basis(hg, 1.0, "auto", max_exact_n=10).mode == "exact"
        assert build_basis(hg, 1.0, "auto", max_exact_n=9).mode == "chebyshev"


class TestChebyshev:
    """Test suite for the Chebyshev approximation of the heat kernel."""

    def _relative_error(self, hg, order):
        exact = build_basis(hg, 1.0, "exact")
        approx = chebyshev_basis(hypergraph_laplacian(hg), 1.0, order)
        n = hg.n_nodes
        theta = approx.theta @ np.eye(n)
        return np.linalg.norm(theta - exact.theta) / np.linalg.norm(exact.theta)

    def test_order_thirty_matches_exact(self):
        rng = np.random.default_rng(5)
        hg = random_hypergraph(50, rng)
        assert self._relative_error(hg, 30) < 1e-3

    def test_error_shrinks_with_order(self):
        rng = np.random.default_rng(6)
        hg = random_hypergraph(50, rng)
        errors = [self._relative_error(hg, k) for k in (5, 10, 20, 30)]
        for a, b in zip(errors, errors[1:]):
            assert b <= a + 1e-12

    def test_negative_scale_is_inverse_kernel(self):
        rng = np.random.default_rng(7)
        hg = random_hypergraph(15, rng)
        exact = build_basis(hg, 1.0, "exact")
        lap = hypergraph_laplacian(hg)
        x = rng.standard_normal((15, 2))
        np.testing.assert_allclose(chebyshev_apply(lap, -1.0, 30, x, 1.0), exact.theta_inv @ x, atol=1e-8)

    def test_estimated_bound(self):
        lap = hypergraph_laplacian(make_hypergraph([[1], [1]]))
        assert estimate_lambda_max(lap) == pytest.approx(1.0, abs=1e-6)
        x = np.array([[1.0], [0.0]])
        exact = build_basis(make_hypergraph([[1], [1]]), 1.0, "exact")
        np.testing.assert_allclose(chebyshev_apply(lap, 1.0, 30, x), exact.theta @ x, atol=1e-8)

    def test_linear_operator_is_symmetric(self):
        rng = np.random.default_rng(8)
        hg = random_hypergraph(8, rng)
        basis = chebyshev_basis(hypergraph_laplacian(hg), 1.0, 20)
        x = rng.standard_normal((8, 3))
        np.testing.assert_allclose(basis.theta.T @ x, basis.theta @ x, atol=1e-14)
