"""Full-ranking Recall@k / NDCG@k, the popularity baseline and multi-seed summaries."""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from ..core.config import settings
from ..core.exceptions import CheckpointError, DataError
from ..core.logging import get_logger
from ..models.domain import InteractionGraph
from ..models.schemas import MetricAtK, MetricReport, RunSummaryRow

_log = get_logger(__name__)

CHUNK_USERS = 512


def rank_items(user_emb: np.ndarray, item_embs: np.ndarray, exclude: Iterable[int] = ()) -> np.ndarray:
    """Item ids not in ``exclude``, by score descending, ties by ascending id."""
    scores = np.asarray(item_embs) @ np.asarray(user_emb).ravel()
    candidates = np.setdiff1d(np.arange(scores.size), np.fromiter(exclude, dtype=np.int64))
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order]


def recall_at_k(ranked, relevant, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty")
    hits = sum(1 for item in list(ranked)[:k] if item in relevant)
    return hits / len(relevant)


def idcg(n: int) -> float:
    return sum(1.0 / math.log2(i + 1) for i in range(1, n + 1))


def ndcg_at_k(ranked, relevant, k: int) -> float:
    """Binary-relevance NDCG; the ideal ranking puts min(k, |relevant|) hits first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty")
    dcg = 0.0
    for pos, item in enumerate(list(ranked)[:k], start=1):
        if item in relevant:
            dcg += 1.0 / math.log2(pos + 1)
    return dcg / idcg(min(k, len(relevant)))


def _score_chunk(
    users: np.ndarray,
    users_emb: np.ndarray,
    items_emb: np.ndarray,
    train_matrix,
    relevant_matrix,
    ks: list[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Per-user recall and ndcg rows (len(users) x len(ks)) for one chunk."""
    k_max = max(ks)
    scores = users_emb[users] @ items_emb.T
    seen = train_matrix[users]
    scores[seen.nonzero()] = -np.inf
    n_candidates = items_emb.shape[0] - np.diff(seen.indptr)

    top = np.argsort(-scores, axis=1, kind="stable")[:, :k_max]
    rel = relevant_matrix[users]
    hits = np.take_along_axis(rel.toarray(), top, axis=1) > 0
    # Excluded items fill the tail; never count them.
    hits &= np.arange(top.shape[1])[None, :] < n_candidates[:, None]
    n_rel = np.diff(rel.indptr)

    discounts = 1.0 / np.log2(np.arange(2, k_max + 2))
    ideal = np.concatenate([[0.0], np.cumsum(discounts)])
    recall = np.empty((len(users), len(ks)))
    ndcg = np.empty((len(users), len(ks)))
    for j, k in enumerate(ks):
        h = hits[:, :k]
        recall[:, j] = h.sum(axis=1) / n_rel
        ndcg[:, j] = (h * discounts[: h.shape[1]]).sum(axis=1) / ideal[np.minimum(k, n_rel)]
    return recall, ndcg


class EvaluationService:
    """Full-ranking top-k evaluation over non-train items."""

    def evaluate_embeddings(
        self,
        users_emb: np.ndarray,
        items_emb: np.ndarray,
        split: InteractionGraph,
        train: InteractionGraph,
        ks: list[int],
        split_name: str = "test",
        seed: int = 0,
    ) -> MetricReport:
        """Mean Recall@k / NDCG@k over users with at least one interaction in ``split``."""
        start = time.perf_counter()
        ks = sorted(set(ks))
        if users_emb.shape[0] != train.n_users or items_emb.shape[0] != train.n_items:
            raise DataError(
                f"embeddings {users_emb.shape[0]}x{items_emb.shape[0]} do not match "
                f"{train.n_users} users x {train.n_items} items"
            )
        relevant = split.matrix().tocsr()
        train_matrix = train.matrix().tocsr()
        users = np.flatnonzero(np.diff(relevant.indptr) > 0)
        if users.size == 0:
            raise DataError(f"no evaluable users in the {split_name} split")

        chunks = [users[i:i + CHUNK_USERS] for i in range(0, users.size, CHUNK_USERS)]
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            parts = list(
                pool.map(
                    lambda c: _score_chunk(c, users_emb, items_emb, train_matrix, relevant, ks),
                    chunks,
                )
            )
        recall = np.vstack([p[0] for p in parts]).sum(axis=0) / users.size
        ndcg = np.vstack([p[1] for p in parts]).sum(axis=0) / users.size

        report = MetricReport(
            split=split_name,
            metrics=[
                MetricAtK(k=k, recall=float(np.clip(r, 0.0, 1.0)), ndcg=float(np.clip(n, 0.0, 1.0)))
                for k, r, n in zip(ks, recall, ndcg)
            ],
            n_users=int(users.size),
            seed=seed,
            wall_time=time.perf_counter() - start,
        )
        _log.debug("evaluated", split=split_name, n_users=report.n_users, seed=seed)
        return report

    def evaluate(
        self,
        checkpoint: dict[str, np.ndarray],
        split: InteractionGraph,
        train: InteractionGraph,
        ks: list[int],
        split_name: str = "test",
        seed: int = 0,
    ) -> MetricReport:
        """Evaluate the final embeddings stored in a checkpoint's parameter table."""
        try:
            users_emb = checkpoint["final.users"]
            items_emb = checkpoint["final.items"]
        except KeyError as e:
            raise CheckpointError(f"checkpoint has no entry {e.args[0]!r}") from e
        if users_emb.shape[0] != train.n_users or items_emb.shape[0] != train.n_items:
            raise CheckpointError(
                f"checkpoint shape mismatch: final.users {users_emb.shape}, final.items "
                f"{items_emb.shape} vs data with {train.n_users} users, {train.n_items} items"
            )
        return self.evaluate_embeddings(users_emb, items_emb, split, train, ks, split_name, seed)

    def popularity_baseline(self, train: InteractionGraph) -> np.ndarray:
        """Items by train interaction count descending, ties by id."""
        counts = np.bincount(train.items, minlength=train.n_items)
        return np.lexsort((np.arange(train.n_items), -counts))

    def evaluate_popularity(
        self,
        split: InteractionGraph,
        train: InteractionGraph,
        ks: list[int],
        split_name: str = "test",
        seed: int = 0,
    ) -> MetricReport:
        """Popularity ranking as one-dimensional embeddings: every user scores by count."""
        counts = np.bincount(train.items, minlength=train.n_items).astype(np.float64)
        return self.evaluate_embeddings(
            np.ones((train.n_users, 1)), counts[:, None], split, train, ks, split_name, seed
        )

    def summarize_runs(
        self, reports: list[MetricReport], variant: Optional[str] = None
    ) -> list[RunSummaryRow]:
        """Mean and population std per (split, k) across runs."""
        if not reports:
            return []
        frame = pd.DataFrame([row for r in reports for row in r.rows()])
        grouped = frame.groupby(["split", "k"], sort=True)
        rows = []
        for (split, k), g in grouped:
            rows.append(
                RunSummaryRow(
                    split=split,
                    k=int(k),
                    recall_mean=float(g["recall"].mean()),
                    recall_std=float(g["recall"].std(ddof=0)),
                    ndcg_mean=float(g["ndcg"].mean()),
                    ndcg_std=float(g["ndcg"].std(ddof=0)),
                    n_runs=int(len(g)),
                    variant=variant,
                )
            )
        return rows


# Global evaluation service instance
evaluation_service = EvaluationService()
