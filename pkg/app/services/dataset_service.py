"""Interaction ingestion, splits, hypergraph construction and synthetic benchmarks."""

import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import scipy.sparse as sp

from ..core.exceptions import DataError, EmptyDatasetError, ParseError, ShapeError
from ..core.logging import get_logger
from ..models.domain import Hypergraph, InteractionGraph, SplitBundle, SyntheticLabels, TextEmbeddings
from ..models.schemas import DatasetStats

_log = get_logger(__name__)


class DatasetService:
    """Ingestion, splitting, hypergraph construction and synthetic data."""

    # ------------------------------------------------------------------
    # Interaction files
    # ------------------------------------------------------------------

    def load_interactions(self, path: str | Path) -> InteractionGraph:
        """Read ``user<TAB>item[<TAB>timestamp]`` lines into dense ids.

        Ids are assigned in first-appearance order. Repeated pairs collapse to
        one interaction that keeps the earliest timestamp.
        """
        path = Path(path)
        if not path.is_file():
            raise DataError(f"Interaction file not found: {path}")

        user_ids: dict[str, int] = {}
        item_ids: dict[str, int] = {}
        first_seen: dict[tuple[int, int], int] = {}
        users: list[int] = []
        items: list[int] = []
        stamps: list[float] = []

        try:
            with path.open("r", encoding="utf-8") as f:
                for line_no, raw in enumerate(f, start=1):
                    line = raw.rstrip("\r\n")
                    if not line.strip():
                        continue
                    fields = line.split("\t")
                    if len(fields) not in (2, 3) or not fields[0] or not fields[1]:
                        raise ParseError(str(path), line_no, "expected 'user<TAB>item[<TAB>timestamp]'")
                    ts = math.nan
                    if len(fields) == 3:
                        try:
                            ts = float(fields[2])
                        except ValueError:
                            raise ParseError(str(path), line_no, f"bad timestamp {fields[2]!r}")
                        if not math.isfinite(ts):
                            raise ParseError(str(path), line_no, f"bad timestamp {fields[2]!r}")

                    u = user_ids.setdefault(fields[0], len(user_ids))
                    i = item_ids.setdefault(fields[1], len(item_ids))
                    pos = first_seen.get((u, i))
                    if pos is None:
                        first_seen[(u, i)] = len(users)
                        users.append(u)
                        items.append(i)
                        stamps.append(ts)
                    elif not math.isnan(ts) and (math.isnan(stamps[pos]) or ts < stamps[pos]):
                        stamps[pos] = ts
        except UnicodeDecodeError as e:
            raise DataError(f"{path} is not valid UTF-8: {e}") from e

        if not users:
            raise EmptyDatasetError(f"No interactions found in {path}")

        graph = InteractionGraph(
            n_users=len(user_ids),
            n_items=len(item_ids),
            users=np.array(users, dtype=np.int64),
            items=np.array(items, dtype=np.int64),
            timestamps=np.array(stamps, dtype=np.float64),
            user_names=tuple(user_ids),
            item_names=tuple(item_ids),
        )
        _log.info("interactions loaded", path=str(path), **self.dataset_stats(graph).model_dump())
        return graph

    def write_interactions(self, graph: InteractionGraph, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as f:
            for u, i, ts in zip(graph.users, graph.items, graph.timestamps):
                line = f"{graph.user_names[u]}\t{graph.item_names[i]}"
                if not math.isnan(ts):
                    line += f"\t{ts:.17g}"
                f.write(line + "\n")

    def dataset_stats(self, graph: InteractionGraph) -> DatasetStats:
        cells = graph.n_users * graph.n_items
        return DatasetStats(
            users=graph.n_users,
            items=graph.n_items,
            interactions=graph.n_interactions,
            density=graph.n_interactions / cells if cells else 0.0,
        )

    # ------------------------------------------------------------------
    # Splitting
    # ------------------------------------------------------------------

    def split_interactions(
        self,
        graph: InteractionGraph,
        ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
        seed: int = 0,
    ) -> SplitBundle:
        """Per-user shuffled split; val/test sizes round down so train gets the remainder.

        Users with fewer than 3 interactions stay entirely in train.
        """
        if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError("ratios must be three positive numbers summing to 1")
        _, r_val, r_test = ratios
        rng = np.random.default_rng(seed)

        part = np.zeros(graph.n_interactions, dtype=np.int8)  # 0 train, 1 val, 2 test
        order = np.argsort(graph.users, kind="stable")
        bounds = np.searchsorted(graph.users[order], np.arange(graph.n_users + 1))
        for u in range(graph.n_users):
            idx = order[bounds[u]:bounds[u + 1]]
            n = idx.size
            if n < 3:
                continue
            n_val = int(math.floor(n * r_val + 1e-9))
            n_test = int(math.floor(n * r_test + 1e-9))
            perm = rng.permutation(idx)
            part[perm[:n_val]] = 1
            part[perm[n_val:n_val + n_test]] = 2

        bundle = SplitBundle(
            train=graph.subset(part == 0),
            val=graph.subset(part == 1),
            test=graph.subset(part == 2),
            seed=seed,
            ratios=tuple(ratios),
        )
        _log.info(
            "split done",
            seed=seed,
            train=bundle.train.n_interactions,
            val=bundle.val.n_interactions,
            test=bundle.test.n_interactions,
        )
        return bundle

    # ------------------------------------------------------------------
    # Hypergraphs
    # ------------------------------------------------------------------

    def _from_columns(self, incidence: sp.csr_matrix) -> Hypergraph:
        incidence = sp.csc_matrix(incidence)
        sizes = np.diff(incidence.indptr)
        keep = np.flatnonzero(sizes > 0)
        h = incidence[:, keep].tocsr()
        h.data[:] = 1.0
        return Hypergraph(incidence=h, edge_weights=np.ones(keep.size), edge_keys=keep)

    def build_user_hypergraph(self, train: InteractionGraph) -> Hypergraph:
        """Users as nodes; one hyperedge per item holding that item's users."""
        if train.n_interactions == 0:
            raise EmptyDatasetError("cannot build a hypergraph from an empty train split")
        return self._from_columns(train.matrix())

    def build_item_hypergraph(self, train: InteractionGraph) -> Hypergraph:
        """Items as nodes; one hyperedge per user holding that user's items."""
        if train.n_interactions == 0:
            raise EmptyDatasetError("cannot build a hypergraph from an empty train split")
        return self._from_columns(train.matrix().T)

    def build_unified_hypergraph(self, train: InteractionGraph) -> Hypergraph:
        """Users and items as one node set (items offset by n_users).

        Each user yields a hyperedge {user} + its items, each item a hyperedge
        {item} + its users. Edge keys follow the same offset convention.
        """
        if train.n_interactions == 0:
            raise EmptyDatasetError("cannot build a hypergraph from an empty train split")
        r = train.matrix()
        n_u, n_i = train.n_users, train.n_items
        user_edges = sp.vstack([sp.identity(n_u, format="csr"), r.T])
        item_edges = sp.vstack([r, sp.identity(n_i, format="csr")])
        incidence = sp.hstack([user_edges, item_edges]).tocsc()

        active = np.concatenate(
            [np.diff(r.indptr) > 0, np.diff(r.tocsc().indptr) > 0]
        )
        keep = np.flatnonzero(active)
        h = incidence[:, keep].tocsr()
        return Hypergraph(incidence=h, edge_weights=np.ones(keep.size), edge_keys=keep)

    def hyperedge_heterophily(self, hg: Hypergraph, labels: np.ndarray) -> float:
        """Mean of (1 - majority-label share) over hyperedges with two or more nodes."""
        labels = np.asarray(labels)
        h = hg.incidence.tocsc()
        scores = []
        for e in range(hg.n_edges):
            members = h.indices[h.indptr[e]:h.indptr[e + 1]]
            if members.size < 2:
                continue
            counts = np.unique(labels[members], return_counts=True)[1]
            scores.append(1.0 - counts.max() / members.size)
        return float(np.mean(scores)) if scores else 0.0

    # ------------------------------------------------------------------
    # Synthetic heterophilic benchmark
    # ------------------------------------------------------------------

    def generate_synthetic_heterophilic(
        self,
        n_users: int,
        n_items: int,
        n_user_groups: int,
        n_item_genres: int,
        cross_rate: float,
        interactions_per_user: int,
        seed: int = 0,
    ) -> tuple[InteractionGraph, SyntheticLabels]:
        """Users prefer the genre of their group; a ``cross_rate`` share of draws
        ignores genre and samples the whole catalog uniformly.

        Expected home-genre share is (1 - c) + c / n_item_genres for equal genres.
        """
        if min(n_users, n_items, n_user_groups, n_item_genres, interactions_per_user) < 1:
            raise ValueError("all counts must be positive")
        if not 0.0 <= cross_rate <= 1.0:
            raise ValueError("cross_rate must lie in [0, 1]")
        if interactions_per_user > n_items:
            raise ValueError(
                f"interactions_per_user={interactions_per_user} exceeds n_items={n_items}"
            )

        rng = np.random.default_rng(seed)
        item_genres = rng.permutation(np.arange(n_items) % n_item_genres)
        user_groups = rng.permutation(np.arange(n_users) % n_user_groups)
        home = user_groups % n_item_genres
        pools = [np.flatnonzero(item_genres == g) for g in range(n_item_genres)]

        users: list[int] = []
        items: list[int] = []
        for u in range(n_users):
            pool = pools[home[u]]
            chosen: set[int] = set()
            home_left = pool.size
            while len(chosen) < interactions_per_user:
                if home_left == 0 or rng.random() < cross_rate:
                    cand = int(rng.integers(n_items))
                else:
                    cand = int(pool[rng.integers(pool.size)])
                if cand in chosen:
                    continue
                chosen.add(cand)
                if item_genres[cand] == home[u]:
                    home_left -= 1
                users.append(u)
                items.append(cand)

        graph = InteractionGraph(
            n_users=n_users,
            n_items=n_items,
            users=np.array(users, dtype=np.int64),
            items=np.array(items, dtype=np.int64),
            timestamps=np.full(len(users), np.nan),
            user_names=tuple(f"u{k}" for k in range(n_users)),
            item_names=tuple(f"i{k}" for k in range(n_items)),
        )
        labels = SyntheticLabels(user_groups=user_groups, item_genres=item_genres, home_genres=home)
        _log.info(
            "synthetic dataset generated",
            seed=seed,
            cross_rate=cross_rate,
            home_share=round(self.home_genre_share(graph, labels), 4),
            **self.dataset_stats(graph).model_dump(),
        )
        return graph, labels

    def home_genre_share(self, graph: InteractionGraph, labels: SyntheticLabels) -> float:
        """Fraction of interactions whose item belongs to the user's home genre."""
        if graph.n_interactions == 0:
            return 0.0
        hits = labels.item_genres[graph.items] == labels.home_genres[graph.users]
        return float(hits.mean())

    # ------------------------------------------------------------------
    # Text embeddings
    # ------------------------------------------------------------------

    def load_text_embeddings(
        self,
        path: str | Path,
        expected_entities: int,
        entity_kind: Literal["user", "item"],
    ) -> TextEmbeddings:
        """Read a ``n d`` header followed by n rows of d reals (dense id order)."""
        path = Path(path)
        if not path.is_file():
            raise DataError(f"Text embedding file not found: {path}")
        with path.open("r", encoding="utf-8") as f:
            lines = [ln for ln in f.read().splitlines() if ln.strip()]
        if not lines:
            raise EmptyDatasetError(f"Text embedding file {path} is empty")

        header = lines[0].split()
        try:
            n, d = int(header[0]), int(header[1])
            if len(header) != 2 or n < 0 or d < 1:
                raise ValueError
        except (ValueError, IndexError):
            raise ParseError(str(path), 1, "header must be 'n d'")
        if n != expected_entities:
            raise ShapeError(
                f"{path}: header declares {n} {entity_kind}s, expected {expected_entities}"
            )
        if len(lines) - 1 != n:
            raise ShapeError(f"{path}: header declares {n} rows, found {len(lines) - 1}")

        matrix = np.empty((n, d), dtype=np.float64)
        for row, line in enumerate(lines[1:]):
            fields = line.split()
            if len(fields) != d:
                raise ShapeError(f"{path}: row {row + 1} has {len(fields)} values, expected {d}")
            try:
                matrix[row] = [float(x) for x in fields]
            except ValueError:
                raise ParseError(str(path), row + 2, "non-numeric value")
        if not np.all(np.isfinite(matrix)):
            raise DataError(f"{path}: non-finite value in text embeddings")
        return TextEmbeddings(matrix=matrix, entity_kind=entity_kind)

    def write_text_embeddings(self, emb: TextEmbeddings, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n, d = emb.matrix.shape
        with path.open("w", encoding="utf-8", newline="\n") as f:
            f.write(f"{n} {d}\n")
            for row in emb.matrix:
                f.write(" ".join(f"{x:.17g}" for x in row) + "\n")

    def synthesize_text_embeddings(
        self,
        n: int,
        d_text: int,
        seed: int,
        entity_kind: Literal["user", "item"],
        labels: Optional[np.ndarray] = None,
        noise: float = 0.5,
    ) -> TextEmbeddings:
        """Seeded stand-in for profile embeddings.

        With ``labels`` each row is its label's centroid plus Gaussian noise;
        without, rows are plain Gaussian.
        """
        rng = np.random.default_rng([seed, 0 if entity_kind == "user" else 1])
        if labels is None:
            matrix = rng.standard_normal((n, d_text))
        else:
            labels = np.asarray(labels)
            centroids = rng.standard_normal((int(labels.max()) + 1, d_text))
            matrix = centroids[labels] + noise * rng.standard_normal((n, d_text))
        return TextEmbeddings(matrix=matrix, entity_kind=entity_kind)


# Global dataset service instance
dataset_service = DatasetService()
