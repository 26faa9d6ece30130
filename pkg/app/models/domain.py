"""Core data structures. All are immutable after construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import scipy.sparse as sp

from .schemas import HistoryRow


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class InteractionGraph:
    """Bipartite user-item interactions over dense id ranges.

    ``user_names[k]`` / ``item_names[k]`` give the external id of dense id ``k``.
    Interactions are stored column-wise; timestamps are NaN where absent.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    user_names: tuple[str, ...]
    item_names: tuple[str, ...]

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        items = np.asarray(self.items, dtype=np.int64)
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if not (users.shape == items.shape == ts.shape) or users.ndim != 1:
            raise ValueError("users, items and timestamps must be aligned 1-d arrays")
        if len(self.user_names) != self.n_users or len(self.item_names) != self.n_items:
            raise ValueError("id maps disagree with declared entity counts")
        if users.size:
            if users.min() < 0 or users.max() >= self.n_users:
                raise ValueError("user id out of range")
            if items.min() < 0 or items.max() >= self.n_items:
                raise ValueError("item id out of range")
            keys = users * self.n_items + items
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (user, item) interaction")
        object.__setattr__(self, "users", _frozen(users))
        object.__setattr__(self, "items", _frozen(items))
        object.__setattr__(self, "timestamps", _frozen(ts))

    @property
    def n_interactions(self) -> int:
        return int(self.users.size)

    @property
    def user_ids(self) -> dict[str, int]:
        return {name: k for k, name in enumerate(self.user_names)}

    @property
    def item_ids(self) -> dict[str, int]:
        return {name: k for k, name in enumerate(self.item_names)}

    def pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.users.tolist(), self.items.tolist()))

    def matrix(self) -> sp.csr_matrix:
        """n_users x n_items 0/1 interaction matrix."""
        data = np.ones(self.n_interactions)
        return sp.csr_matrix(
            (data, (self.users, self.items)), shape=(self.n_users, self.n_items)
        )

    def items_by_user(self) -> list[np.ndarray]:
        m = self.matrix()
        return [m.indices[m.indptr[u]:m.indptr[u + 1]] for u in range(self.n_users)]

    def subset(self, mask: np.ndarray) -> InteractionGraph:
        """Same id spaces, only the interactions selected by ``mask``."""
        return InteractionGraph(
            n_users=self.n_users,
            n_items=self.n_items,
            users=self.users[mask],
            items=self.items[mask],
            timestamps=self.timestamps[mask],
            user_names=self.user_names,
            item_names=self.item_names,
        )


@dataclass(frozen=True)
class Hypergraph:
    """Nodes and hyperedges as a sparse 0/1 incidence matrix (n_nodes x n_edges).

    ``edge_keys[e]`` records the entity each hyperedge was built from.
    """

    incidence: sp.csr_matrix
    edge_weights: np.ndarray
    edge_keys: np.ndarray

    def __post_init__(self):
        h = sp.csr_matrix(self.incidence, dtype=np.float64)
        h.sum_duplicates()
        h.sort_indices()
        if h.nnz and not np.all(h.data == 1.0):
            raise ValueError("incidence entries must be 0/1")
        sizes = np.asarray(h.sum(axis=0)).ravel()
        if np.any(sizes < 1):
            raise ValueError("every hyperedge must contain at least one node")
        w = np.asarray(self.edge_weights, dtype=np.float64)
        if w.shape != (h.shape[1],) or np.any(w <= 0):
            raise ValueError("edge_weights must be positive, one per hyperedge")
        object.__setattr__(self, "incidence", h)
        object.__setattr__(self, "edge_weights", _frozen(w))
        object.__setattr__(self, "edge_keys", _frozen(np.asarray(self.edge_keys, dtype=np.int64)))

    @property
    def n_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]


@dataclass(frozen=True)
class SplitBundle:
    train: InteractionGraph
    val: InteractionGraph
    test: InteractionGraph
    seed: int
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class TextEmbeddings:
    matrix: np.ndarray
    entity_kind: Literal["user", "item"]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("text embeddings must be a matrix")
        if not np.all(np.isfinite(m)):
            raise ValueError("text embeddings must be finite")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SyntheticLabels:
    """Ground-truth groups of the heterophilic generator, kept for diagnostics."""

    user_groups: np.ndarray
    item_genres: np.ndarray
    home_genres: np.ndarray  # home genre of each user


@dataclass(frozen=True)
class WaveletBasis:
    """Forward (theta) and inverse (theta_inv) heat-kernel wavelet operators.

    In chebyshev mode ``theta`` / ``theta_inv`` are ``LinearOperator`` instances and
    ``eigenvalues`` is None.
    """

    theta: object
    theta_inv: object
    scale: float
    eigenvalues: Optional[np.ndarray]
    mode: str
    cheb_order: Optional[int] = None

    @property
    def n(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class BprBatch:
    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    @property
    def batch_size(self) -> int:
        return int(self.users.size)


@dataclass
class TrainingResult:
    """Best-validation parameters plus the per-epoch history."""

    params: dict[str, np.ndarray]
    history: list[HistoryRow] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = 0.0
    final_users: Optional[np.ndarray] = None
    final_items: Optional[np.ndarray] = None
