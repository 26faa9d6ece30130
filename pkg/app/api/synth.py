import argparse
from pathlib import Path

from ..core.exceptions import ConfigError
from ..models.domain import TextEmbeddings
from ..services.dataset_service import dataset_service
from ..utils.reports import write_csv
from .common import status


def register(subparsers) -> None:
    p = subparsers.add_parser("synth", help="Generate a synthetic heterophilic dataset")
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=1000)
    p.add_argument("--groups", type=int, default=4, help="User groups")
    p.add_argument("--genres", type=int, default=4, help="Item genres")
    p.add_argument("--cross-rate", type=float, default=0.3)
    p.add_argument("--per-user", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--text-dim", type=int, default=16, help="Dimension of the synthetic profile embeddings")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    try:
        graph, labels = dataset_service.generate_synthetic_heterophilic(
            args.users, args.items, args.groups, args.genres, args.cross_rate, args.per_user, args.seed
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e

    out = Path(args.out)
    path = out / "interactions.tsv"
    dataset_service.write_interactions(graph, path)
    write_csv(
        [{"user": n, "group": int(g)} for n, g in zip(graph.user_names, labels.user_groups)],
        out / "user_groups.csv",
    )
    write_csv(
        [{"item": n, "genre": int(g)} for n, g in zip(graph.item_names, labels.item_genres)],
        out / "item_genres.csv",
    )

    # Text rows follow the dense ids the interaction file gets when loaded back.
    reloaded = dataset_service.load_interactions(path)
    for kind, n, lab, ids, names in (
        ("user", graph.n_users, labels.user_groups, graph.user_ids, reloaded.user_names),
        ("item", graph.n_items, labels.item_genres, graph.item_ids, reloaded.item_names),
    ):
        emb = dataset_service.synthesize_text_embeddings(n, args.text_dim, args.seed, kind, lab)
        rows = emb.matrix[[ids[name] for name in names]]
        dataset_service.write_text_embeddings(TextEmbeddings(rows, kind), out / f"{kind}_text.txt")

    status(True, dataset_service.dataset_stats(graph).summary())
    print(f"  home-genre share {dataset_service.home_genre_share(graph, labels):.4f}")
    if reloaded.n_items < graph.n_items:
        print(f"  {graph.n_items - reloaded.n_items} item(s) drew no interaction and are absent from the file")
    status(True, f"Dataset written to {out}")
    return 0
