"""
Tests for parameter initialization, stream routing, fusion and scoring.
"""

import math

import numpy as np
import pytest

from app.core.exceptions import ShapeError
from app.models.domain import TextEmbeddings
from app.services.dataset_service import dataset_service
from app.services.fusion_service import (
    ModelLayout,
    forward_full,
    infer_embeddings,
    init_params,
    register,
    score,
)
from app.utils.sparse import build_basis, propagation_operator
from app.utils.tape import Tape


@pytest.fixture
def channels(toy_graph):
    """Propagation operators and exact bases for the toy graph."""
    hgs = {
        "user": dataset_service.build_user_hypergraph(toy_graph),
        "item": dataset_service.build_item_hypergraph(toy_graph),
    }
    operators = {c: propagation_operator(hg) for c, hg in hgs.items()}
    bases = {c: build_basis(hg, 1.0, "exact") for c, hg in hgs.items()}
    return operators, bases


def forward(params, layout, channels, text=None):
    operators, bases = channels
    tape = Tape()
    return forward_full(register(tape, params), layout, operators, bases, text)


class TestInitParams:
    """Test suite for deterministic initialization."""

    def test_same_seed_same_values(self):
        a = init_params(4, 5, 3, 2, seed=7)
        b = init_params(4, 5, 3, 2, seed=7)
        assert a.keys() == b.keys()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_different_seed_differs(self):
        a = init_params(4, 5, 3, None, seed=1)
        b = init_params(4, 5, 3, None, seed=2)
        assert not np.array_equal(a["struct.users"], b["struct.users"])

    def test_xavier_bounds(self):
        params = init_params(40, 30, 8, 4, seed=0)
        assert np.abs(params["struct.users"]).max() <= math.sqrt(6 / (40 + 8))
        assert np.abs(params["text_proj"]).max() <= math.sqrt(6 / (4 + 8))

    def test_filters_start_at_one(self):
        params = init_params(4, 5, 3, None, seed=0, layout=ModelLayout(dim=3, wavelet_layers=2))
        for name in ("user.wavelet.filter.0", "item.wavelet.filter.1"):
            np.testing.assert_allclose(np.logaddexp(0.0, params[name]), 1.0, atol=1e-12)
        assert params["user.wavelet.filter.0"].shape == (4, 1)
        assert params["item.wavelet.filter.0"].shape == (5, 1)

    def test_shared_filter_has_single_entry(self):
        layout = ModelLayout(dim=3, wavelet_layers=3, share_filter=True)
        params = init_params(4, 5, 3, None, seed=0, layout=layout)
        assert "user.wavelet.filter.0" in params
        assert "user.wavelet.filter.1" not in params

    def test_optional_entries(self):
        plain = init_params(4, 5, 3, None, seed=0)
        assert "text_proj" not in plain
        assert "fusion.late_logit" not in plain
        scalar = init_params(4, 5, 3, 2, seed=0, layout=ModelLayout(dim=3, late="learned_scalar"))
        assert scalar["fusion.late_logit"].shape == (1, 1)
        assert scalar["text_proj"].shape == (2, 3)

    def test_matrix_factorization_layout(self):
        params = init_params(4, 5, 3, 2, seed=0, layout=ModelLayout.matrix_factorization(3))
        assert set(params) == {"struct.users", "struct.items"}

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            init_params(4, 5, 0, None, seed=0)


class TestForward:
    """Test suite for stream routing and fusion."""

    def test_output_shapes(self, channels):
        layout = ModelLayout(dim=3, hdnn_layers=2, wavelet_layers=2)
        fused = forward(init_params(4, 5, 3, None, seed=0, layout=layout), layout, channels)
        assert fused.users.shape == (4, 3)
        assert fused.items.shape == (5, 3)

    def test_identical_streams_match_structural_only(self, channels):
        """A text stream equal to the structural one leaves the output unchanged."""
        layout = ModelLayout(dim=3, hdnn_layers=2, wavelet_layers=2)
        params = init_params(4, 5, 3, 3, seed=1, layout=layout)
        params["text_proj"] = np.eye(3)
        text = {
            "user": TextEmbeddings(params["struct.users"].copy(), "user"),
            "item": TextEmbeddings(params["struct.items"].copy(), "item"),
        }
        with_text = forward(params, layout, channels, text)
        without = forward(params, layout, channels, None)
        np.testing.assert_allclose(with_text.users.value, without.users.value, atol=1e-12)
        np.testing.assert_allclose(with_text.items.value, without.items.value, atol=1e-12)

    def test_late_mean(self, channels):
        layout = ModelLayout(dim=3, hdnn_layers=1, wavelet_layers=1)
        fused = forward(init_params(4, 5, 3, None, seed=2, layout=layout), layout, channels)
        a = fused.encoder_outputs[("user", "hdnn")].value
        b = fused.encoder_outputs[("user", "wavelet")].value
        np.testing.assert_allclose(fused.users.value, (a + b) / 2, atol=1e-14)

    def test_learned_scalar_starts_at_mean(self, channels):
        layout = ModelLayout(dim=3, hdnn_layers=1, wavelet_layers=1, late="learned_scalar")
        params = init_params(4, 5, 3, None, seed=3, layout=layout)
        fused = forward(params, layout, channels)
        a = fused.encoder_outputs[("item", "hdnn")].value
        b = fused.encoder_outputs[("item", "wavelet")].value
        np.testing.assert_allclose(fused.items.value, (a + b) / 2, atol=1e-12)

        params["fusion.late_logit"] = np.array([[40.0]])
        np.testing.assert_allclose(forward(params, layout, channels).items.value, a, atol=1e-10)

    def test_structural_only_path(self, channels):
        layout = ModelLayout.matrix_factorization(3)
        params = init_params(4, 5, 3, None, seed=4, layout=layout)
        fused = forward(params, layout, channels)
        np.testing.assert_array_equal(fused.users.value, params["struct.users"])
        assert fused.user_pairs == []

    def test_single_encoder_skips_late_fusion(self, channels):
        layout = ModelLayout(dim=3, hdnn=False, wavelet_layers=2)
        fused = forward(init_params(4, 5, 3, None, seed=5, layout=layout), layout, channels)
        np.testing.assert_array_equal(fused.users.value, fused.encoder_outputs[("user", "wavelet")].value)
        assert fused.item_pairs == []

    def test_contrastive_pairs_follow_shallower_encoder(self, channels):
        layout = ModelLayout(dim=3, hdnn_layers=2, wavelet_layers=3)
        fused = forward(init_params(4, 5, 3, None, seed=6, layout=layout), layout, channels)
        assert len(fused.user_pairs) == 3
        z0, g0 = fused.user_pairs[0]
        np.testing.assert_array_equal(z0.value, g0.value)

    def test_text_row_mismatch(self, channels):
        layout = ModelLayout(dim=3)
        params = init_params(4, 5, 3, 2, seed=0, layout=layout)
        text = {"user": TextEmbeddings(np.ones((3, 2)), "user"), "item": None}
        with pytest.raises(ShapeError):
            forward(params, layout, channels, text)

    def test_infer_matches_forward(self, channels):
        layout = ModelLayout(dim=3, hdnn_layers=1, wavelet_layers=1)
        params = init_params(4, 5, 3, None, seed=8, layout=layout)
        users, items = infer_embeddings(params, layout, *channels)
        fused = forward(params, layout, channels)
        np.testing.assert_array_equal(users, fused.users.value)
        np.testing.assert_array_equal(items, fused.items.value)


class TestScore:
    """Test suite for dot-product scoring."""

    def test_dot_product(self):
        users = np.array([[1.0, 0.0], [0.0, 1.0]])
        items = np.array([[2.0, 3.0]])
        assert score(users, items, 0, 0) == 2.0
        assert score(users, items, 1, 0) == 3.0

    def test_zero_user_scores_zero(self):
        assert score(np.zeros((1, 2)), np.ones((1, 2)), 0, 0) == 0.0

    @pytest.mark.parametrize("u,i", [(2, 0), (0, 1), (-1, 0)])
    def test_out_of_range(self, u, i):
        with pytest.raises(IndexError):
            score(np.eye(2), np.ones((1, 2)), u, i)
