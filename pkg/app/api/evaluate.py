import argparse
from pathlib import Path

from ..core.checkpoint import load_checkpoint
from ..core.config import parse_run_config
from ..core.exceptions import CheckpointError, ConfigError
from ..services.dataset_service import dataset_service
from ..services.evaluation_service import evaluation_service
from ..services.training_service import training_service
from ..utils.reports import write_csv
from .common import int_list, status, warn
from .train import REPORT_COLUMNS


def register(subparsers) -> None:
    p = subparsers.add_parser("evaluate", help="Evaluate a checkpoint on the val and test splits")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="Interaction file (defaults to the data source recorded in the checkpoint)")
    p.add_argument("--k", type=int_list, default=None, help="Cutoffs, e.g. 10,20,40")
    p.add_argument("--out", help="Report CSV path (default: next to the checkpoint)")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    try:
        cfg = parse_run_config(ckpt.config)
    except ConfigError as e:
        raise CheckpointError(f"{args.checkpoint}: embedded config is invalid: {e.detail}") from e
    if args.data:
        cfg = cfg.with_override("data.interactions", args.data).with_override("data.synthetic", None)
    ks = args.k or cfg.eval.ks
    seed = cfg.run.seeds[0]

    graph, _ = training_service.load_graph(cfg)
    split = dataset_service.split_interactions(graph, cfg.data.split_ratios, cfg.data.split_seed)

    reports = []
    for name in ("val", "test"):
        part = getattr(split, name)
        if part.n_interactions == 0:
            warn(f"{name} split is empty, skipped")
            continue
        reports.append(evaluation_service.evaluate(ckpt.params, part, split.train, ks, name, seed))

    out = Path(args.out) if args.out else Path(args.checkpoint).with_suffix(".eval.csv")
    write_csv([row for r in reports for row in r.rows()], out, REPORT_COLUMNS)
    for r in reports:
        for m in r.metrics:
            print(f"  {r.split:<5} k={m.k:<4} recall={m.recall:.4f} ndcg={m.ndcg:.4f}")
    status(True, f"Report written to {out}")
    return 0
