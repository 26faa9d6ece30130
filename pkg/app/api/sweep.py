import argparse
from pathlib import Path

from ..core.config import load_run_config
from ..core.exceptions import ConfigError
from ..services.experiment_service import experiment_service, parse_sweep_values
from ..utils.reports import write_csv, write_text
from .common import int_list, status


def register(subparsers) -> None:
    p = subparsers.add_parser("sweep", help="Vary one config key and report test metrics per value")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, help="key=values, e.g. hdnn.layers=1..5 or model.dim=8,16,32")
    p.add_argument("--seeds", type=int_list)
    p.add_argument("--out", help="Output directory (overrides run.output_dir)")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    key, sep, raw_values = args.param.partition("=")
    if not sep or not key or not raw_values:
        raise ConfigError(f"--param must look like section.key=values, got {args.param!r}")
    cfg = load_run_config(args.config)
    if args.seeds:
        cfg = cfg.with_override("run.seeds", args.seeds)
    values = parse_sweep_values(raw_values)
    # Validate every value before any training starts.
    for v in values:
        cfg.with_override(key, v)

    out = Path(args.out or cfg.run.output_dir)
    write_text(cfg.echo(), out / "resolved_config.json")
    rows = experiment_service.run_sweep(cfg, key, values)
    columns = ["param", "value"] + [
        f"{m}@{k}" for k in cfg.eval.ks for m in ("recall", "ndcg")
    ]
    path = write_csv([r.flat() for r in rows], out / f"sweep_{key.replace('.', '_')}.csv", columns)
    status(True, f"Sweep over {key} ({len(values)} values) written to {path}")
    return 0
