import argparse
from pathlib import Path

import pandas as pd

from ..core.config import load_run_config
from ..services.experiment_service import ABLATABLE, experiment_service
from ..utils.reports import write_csv, write_text
from .common import int_list, status

ABLATION_COLUMNS = ["variant", "seed", "split", "k", "recall", "ndcg"]


def register(subparsers) -> None:
    p = subparsers.add_parser("ablate", help="Train ablated variants side by side")
    p.add_argument("--config", required=True)
    p.add_argument("--disable", nargs="*", default=[], metavar="COMPONENT",
                   help=f"One variant per component, from: {', '.join(ABLATABLE)}; join with + to remove several at once")
    p.add_argument("--baselines", action="store_true", help="Also run popularity and MF-BPR baselines")
    p.add_argument("--seeds", type=int_list)
    p.add_argument("--out", help="Output directory (overrides run.output_dir)")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    if args.seeds:
        cfg = cfg.with_override("run.seeds", args.seeds)
    out = Path(args.out or cfg.run.output_dir)
    write_text(cfg.echo(), out / "resolved_config.json")

    rows = experiment_service.run_ablation(cfg, args.disable, include_baselines=args.baselines)
    path = write_csv([r.model_dump() for r in rows], out / "ablation.csv", ABLATION_COLUMNS)

    frame = pd.DataFrame([r.model_dump() for r in rows])
    k = cfg.eval.ks[0]
    means = frame[frame["k"] == k].groupby("variant", sort=False)["ndcg"].mean()
    for variant, ndcg in means.items():
        print(f"  {variant:<28} NDCG@{k} = {ndcg:.4f}")
    status(True, f"Ablation table written to {path}")
    return 0
