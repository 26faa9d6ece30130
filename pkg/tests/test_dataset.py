"""
Tests for ingestion, splitting, hypergraph construction and synthetic data.
"""

import math

import numpy as np
import pytest

from app.core.exceptions import DataError, EmptyDatasetError, ParseError, ShapeError
from app.models.domain import SyntheticLabels, TextEmbeddings
from app.services.dataset_service import dataset_service
from tests.conftest import make_graph, make_hypergraph


class TestLoadInteractions:
    """Test suite for the interaction file loader."""

    def test_dense_ids_in_first_appearance_order(self, interactions_file):
        """Users and items get dense ids as they first appear."""
        graph = dataset_service.load_interactions(interactions_file)
        assert graph.user_names == ("alice", "bob", "carol")
        assert graph.item_names == ("book1", "book2", "book3")
        assert graph.n_interactions == 4

    def test_duplicates_keep_earliest_timestamp(self, interactions_file):
        """A repeated pair collapses to one interaction with the minimum timestamp."""
        graph = dataset_service.load_interactions(interactions_file)
        mask = (graph.users == 0) & (graph.items == 0)
        assert mask.sum() == 1
        assert graph.timestamps[mask][0] == 3.0

    def test_missing_timestamp_is_nan(self, interactions_file):
        """Two-column lines carry no timestamp."""
        graph = dataset_service.load_interactions(interactions_file)
        carol = graph.user_ids["carol"]
        assert math.isnan(graph.timestamps[graph.users == carol][0])

    def test_malformed_line_reports_line_number(self, tmp_path):
        """A line without a tab separator fails with its 1-based line number."""
        path = tmp_path / "bad.tsv"
        path.write_text("u1\ti1\nu2 i2\n", encoding="utf-8")
        with pytest.raises(ParseError) as exc:
            dataset_service.load_interactions(path)
        assert exc.value.line_no == 2
        assert exc.value.exit_code == 3

    def test_empty_file(self, tmp_path):
        """A file with no interactions is rejected."""
        path = tmp_path / "empty.tsv"
        path.write_text("\n\n", encoding="utf-8")
        with pytest.raises(EmptyDatasetError):
            dataset_service.load_interactions(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            dataset_service.load_interactions(tmp_path / "nope.tsv")

    def test_write_then_load(self, tmp_path, interactions_file):
        """Written files load back to the same interactions."""
        graph = dataset_service.load_interactions(interactions_file)
        out = tmp_path / "copy.tsv"
        dataset_service.write_interactions(graph, out)
        again = dataset_service.load_interactions(out)
        assert again.user_names == graph.user_names
        assert again.item_names == graph.item_names
        np.testing.assert_array_equal(again.users, graph.users)
        np.testing.assert_array_equal(again.items, graph.items)
        np.testing.assert_array_equal(np.isnan(again.timestamps), np.isnan(graph.timestamps))

    def test_dataset_stats(self, toy_graph):
        stats = dataset_service.dataset_stats(toy_graph)
        assert (stats.users, stats.items, stats.interactions) == (4, 5, 10)
        assert stats.density == pytest.approx(10 / 20)


class TestSplit:
    """Test suite for the per-user split protocol."""

    def test_ten_interactions_split_seven_one_two(self):
        """A 10-interaction user yields 7 train, 1 val, 2 test."""
        graph = make_graph([(0, i) for i in range(10)])
        split = dataset_service.split_interactions(graph, (0.7, 0.1, 0.2), seed=0)
        assert (split.train.n_interactions, split.val.n_interactions, split.test.n_interactions) == (7, 1, 2)

    def test_light_users_stay_in_train(self, toy_graph):
        """Users with fewer than 3 interactions are train-only."""
        split = dataset_service.split_interactions(toy_graph, seed=1)
        for part in (split.val, split.test):
            assert not np.isin(part.users, [2, 3]).any()
        assert (split.train.users == 3).sum() == 1

    def test_partition_is_disjoint_and_complete(self):
        rng = np.random.default_rng(3)
        pairs = {(int(u), int(i)) for u, i in zip(rng.integers(30, size=400), rng.integers(25, size=400))}
        graph = make_graph(sorted(pairs), 30, 25)
        split = dataset_service.split_interactions(graph, seed=7)
        train, val, test = split.train.pairs(), split.val.pairs(), split.test.pairs()
        assert not (train & val or train & test or val & test)
        assert train | val | test == graph.pairs()

    def test_same_seed_same_split(self, toy_graph):
        a = dataset_service.split_interactions(toy_graph, seed=5)
        b = dataset_service.split_interactions(toy_graph, seed=5)
        assert a.test.pairs() == b.test.pairs()
        assert a.val.pairs() == b.val.pairs()

    def test_bad_ratios(self, toy_graph):
        with pytest.raises(ValueError):
            dataset_service.split_interactions(toy_graph, (0.5, 0.1, 0.1))


class TestHypergraphs:
    """Test suite for user, item and unified hypergraph construction."""

    def test_user_hypergraph_edges_are_items(self, toy_graph):
        hg = dataset_service.build_user_hypergraph(toy_graph)
        assert hg.n_nodes == 4
        assert hg.n_edges == 5
        col = hg.incidence.toarray()[:, list(hg.edge_keys).index(3)]
        np.testing.assert_array_equal(np.flatnonzero(col), [0, 3])

    def test_item_hypergraph_edges_are_users(self, toy_graph):
        hg = dataset_service.build_item_hypergraph(toy_graph)
        assert hg.n_nodes == 5
        assert hg.n_edges == 4
        col = hg.incidence.toarray()[:, 0]
        np.testing.assert_array_equal(np.flatnonzero(col), [0, 1, 2, 3])

    def test_items_without_train_users_form_no_edge(self):
        graph = make_graph([(0, 0), (1, 0)], n_users=2, n_items=3)
        hg = dataset_service.build_user_hypergraph(graph)
        assert hg.n_edges == 1
        assert list(hg.edge_keys) == [0]

    def test_unified_hypergraph(self, toy_graph):
        hg = dataset_service.build_unified_hypergraph(toy_graph)
        assert hg.n_nodes == 9
        assert hg.n_edges == 9
        user0 = hg.incidence.toarray()[:, 0]
        np.testing.assert_array_equal(np.flatnonzero(user0), [0, 4, 5, 6, 7])

    def test_empty_train_rejected(self):
        graph = make_graph([(0, 0)]).subset(np.array([False]))
        with pytest.raises(EmptyDatasetError):
            dataset_service.build_user_hypergraph(graph)

    def test_heterophily(self):
        hg = make_hypergraph([[1, 1], [1, 1], [0, 1]])
        assert dataset_service.hyperedge_heterophily(hg, np.array([0, 0, 1])) == pytest.approx(
            (0.0 + (1 - 2 / 3)) / 2
        )
        assert dataset_service.hyperedge_heterophily(hg, np.array([0, 0, 0])) == 0.0


class TestSynthetic:
    """Test suite for the heterophilic generator."""

    def test_no_cross_draws_stay_home(self):
        graph, labels = dataset_service.generate_synthetic_heterophilic(50, 40, 4, 4, 0.0, 5, seed=0)
        assert dataset_service.home_genre_share(graph, labels) == 1.0
        assert graph.n_interactions == 50 * 5

    def test_full_cross_rate_is_uniform(self):
        """With every draw cross-genre the home share approaches 1/G."""
        graph, labels = dataset_service.generate_synthetic_heterophilic(2000, 1000, 4, 4, 1.0, 20, seed=0)
        assert dataset_service.home_genre_share(graph, labels) == pytest.approx(0.25, abs=0.02)

    def test_expected_home_share(self):
        graph, labels = dataset_service.generate_synthetic_heterophilic(2000, 1000, 4, 4, 0.3, 20, seed=1)
        assert dataset_service.home_genre_share(graph, labels) == pytest.approx(0.7 + 0.3 / 4, abs=0.02)

    def test_home_share_non_increasing_in_cross_rate(self):
        shares = []
        for c in (0.0, 0.25, 0.5, 0.75, 1.0):
            graph, labels = dataset_service.generate_synthetic_heterophilic(400, 200, 4, 4, c, 10, seed=3)
            shares.append(dataset_service.home_genre_share(graph, labels))
        assert shares[0] == 1.0
        assert all(a >= b for a, b in zip(shares, shares[1:]))
        assert shares[-1] == pytest.approx(0.25, abs=0.04)

    def test_deterministic(self):
        a, _ = dataset_service.generate_synthetic_heterophilic(30, 20, 2, 2, 0.3, 4, seed=9)
        b, _ = dataset_service.generate_synthetic_heterophilic(30, 20, 2, 2, 0.3, 4, seed=9)
        np.testing.assert_array_equal(a.items, b.items)

    def test_per_user_above_catalog(self):
        with pytest.raises(ValueError):
            dataset_service.generate_synthetic_heterophilic(5, 3, 1, 1, 0.0, 4)

    def test_cross_rate_raises_item_heterophily(self):
        """More cross-genre draws make user hyperedges over items more mixed."""
        scores = []
        for c in (0.0, 0.6):
            graph, labels = dataset_service.generate_synthetic_heterophilic(200, 100, 4, 4, c, 10, seed=2)
            hg = dataset_service.build_item_hypergraph(graph)
            scores.append(dataset_service.hyperedge_heterophily(hg, labels.item_genres))
        assert scores[0] == 0.0
        assert scores[1] > 0.3


class TestTextEmbeddings:
    """Test suite for text embedding files and synthesis."""

    def test_write_then_load(self, tmp_path):
        emb = TextEmbeddings(np.arange(6, dtype=float).reshape(3, 2) / 7, "item")
        path = tmp_path / "items.txt"
        dataset_service.write_text_embeddings(emb, path)
        loaded = dataset_service.load_text_embeddings(path, 3, "item")
        np.testing.assert_array_equal(loaded.matrix, emb.matrix)

    def test_header_count_mismatch(self, tmp_path):
        path = tmp_path / "users.txt"
        path.write_text("2 2\n1 2\n3 4\n", encoding="utf-8")
        with pytest.raises(ShapeError):
            dataset_service.load_text_embeddings(path, 3, "user")

    def test_row_width_mismatch(self, tmp_path):
        path = tmp_path / "users.txt"
        path.write_text("2 2\n1 2\n3\n", encoding="utf-8")
        with pytest.raises(ShapeError):
            dataset_service.load_text_embeddings(path, 2, "user")

    def test_non_finite_value(self, tmp_path):
        path = tmp_path / "users.txt"
        path.write_text("1 2\n1 nan\n", encoding="utf-8")
        with pytest.raises(DataError):
            dataset_service.load_text_embeddings(path, 1, "user")

    def test_labelled_synthesis_clusters(self):
        """Rows sharing a label sit closer to each other than to other labels."""
        labels = np.array([0, 0, 0, 1, 1, 1])
        emb = dataset_service.synthesize_text_embeddings(6, 8, seed=0, entity_kind="user", labels=labels, noise=0.05)
        m = emb.matrix
        within = np.linalg.norm(m[0] - m[1])
        across = np.linalg.norm(m[0] - m[3])
        assert within < across

    def test_user_and_item_streams_differ(self):
        a = dataset_service.synthesize_text_embeddings(4, 3, seed=0, entity_kind="user")
        b = dataset_service.synthesize_text_embeddings(4, 3, seed=0, entity_kind="item")
        assert not np.allclose(a.matrix, b.matrix)
