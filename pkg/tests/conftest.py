"""
Pytest configuration and fixtures for hyperwave tests.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from app.core.config import RunConfig, parse_run_config
from app.models.domain import Hypergraph, InteractionGraph


def make_graph(pairs, n_users=None, n_items=None) -> InteractionGraph:
    """InteractionGraph from (user, item) id pairs with names u{k} / i{k}."""
    users = np.array([p[0] for p in pairs], dtype=np.int64)
    items = np.array([p[1] for p in pairs], dtype=np.int64)
    n_users = n_users if n_users is not None else int(users.max()) + 1
    n_items = n_items if n_items is not None else int(items.max()) + 1
    return InteractionGraph(
        n_users=n_users,
        n_items=n_items,
        users=users,
        items=items,
        timestamps=np.full(users.size, np.nan),
        user_names=tuple(f"u{k}" for k in range(n_users)),
        item_names=tuple(f"i{k}" for k in range(n_items)),
    )


def make_hypergraph(dense) -> Hypergraph:
    h = np.asarray(dense, dtype=float)
    return Hypergraph(
        incidence=sp.csr_matrix(h),
        edge_weights=np.ones(h.shape[1]),
        edge_keys=np.arange(h.shape[1]),
    )


def random_hypergraph(n_nodes: int, rng: np.random.Generator, density: float = 0.3) -> Hypergraph:
    """Random hypergraph in which every node belongs to at least one edge."""
    n_edges = max(2, n_nodes // 2)
    h = (rng.random((n_nodes, n_edges)) < density).astype(float)
    h[np.arange(n_nodes), rng.integers(n_edges, size=n_nodes)] = 1.0
    return make_hypergraph(h)


@pytest.fixture
def toy_graph():
    """4 users x 5 items with a mix of heavy and light users."""
    pairs = [
        (0, 0), (0, 1), (0, 2), (0, 3),
        (1, 1), (1, 2), (1, 4),
        (2, 0), (2, 4),
        (3, 3),
    ]
    return make_graph(pairs, n_users=4, n_items=5)


@pytest.fixture
def interactions_file(tmp_path):
    """Tab-separated file with a duplicate pair and a timestamp column."""
    path = tmp_path / "interactions.tsv"
    path.write_text(
        "alice\tbook1\t10\n"
        "alice\tbook2\t5\n"
        "bob\tbook2\t7\n"
        "alice\tbook1\t3\n"
        "\n"
        "carol\tbook3\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def tiny_config_data(tmp_path) -> dict:
    """Small synthetic run that trains in well under a second per epoch."""
    return {
        "data": {
            "synthetic": {
                "users": 40,
                "items": 30,
                "user_groups": 2,
                "genres": 3,
                "cross_rate": 0.3,
                "per_user": 10,
                "seed": 0,
            },
        },
        "text": {"enabled": True, "synth_dim": 4},
        "model": {"dim": 6},
        "hdnn": {"layers": 2},
        "wavelet": {"layers": 2, "mode": "exact"},
        "train": {"epochs": 2, "batch_size": 64, "lr": 0.01, "patience": 5},
        "eval": {"ks": [5, 10], "val_k": 5},
        "run": {"seeds": [0], "output_dir": str(tmp_path / "run")},
    }


@pytest.fixture
def tiny_config(tiny_config_data) -> RunConfig:
    return parse_run_config(tiny_config_data)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def write_toml(data: dict, path) -> None:
    """Minimal TOML writer for nested tables of scalars and lists."""
    lines = []

    def emit(prefix, table):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
        if scalars or not prefix:
            if prefix:
                lines.append(f"[{prefix}]")
            for k, v in scalars.items():
                lines.append(f"{k} = {_toml_value(v)}")
            lines.append("")
        for k, v in table.items():
            if isinstance(v, dict):
                emit(f"{prefix}.{k}" if prefix else k, v)

    emit("", data)
    path.write_text("\n".join(lines), encoding="utf-8")


@pytest.fixture
def tiny_config_path(tiny_config_data, tmp_path):
    path = tmp_path / "tiny.toml"
    write_toml(tiny_config_data, path)
    return path
