import argparse
from pathlib import Path

from ..core.checkpoint import save_checkpoint
from ..core.config import RunConfig, load_run_config
from ..core.logging import get_logger
from ..models.domain import TrainingResult
from ..services.dataset_service import dataset_service
from ..services.evaluation_service import evaluation_service
from ..services.training_service import PreparedRun, training_service
from ..utils.reports import write_csv, write_text
from .common import int_list, status, warn

_log = get_logger(__name__)

HISTORY_COLUMNS = ["epoch", "bpr", "ssl", "reg"]
REPORT_COLUMNS = ["split", "k", "recall", "ndcg", "n_users", "seed"]
SUMMARY_COLUMNS = ["split", "k", "recall_mean", "recall_std", "ndcg_mean", "ndcg_std", "n_runs"]


def register(subparsers) -> None:
    p = subparsers.add_parser("train", help="Train one model per seed and write checkpoints")
    p.add_argument("--config", required=True, help="TOML run config")
    p.add_argument("--seeds", type=int_list, help="Comma-separated seeds (overrides run.seeds)")
    p.add_argument("--text", choices=["synth"], help="Use seeded synthetic text embeddings")
    p.add_argument("--out", help="Output directory (overrides run.output_dir)")
    p.set_defaults(handler=run)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config)
    if getattr(args, "seeds", None):
        cfg = cfg.with_override("run.seeds", args.seeds)
    if getattr(args, "text", None) == "synth":
        cfg = cfg.with_override("text.synth", True)
    if getattr(args, "out", None):
        cfg = cfg.with_override("run.output_dir", args.out)
    return cfg


def checkpoint_params(result: TrainingResult) -> dict:
    params = dict(result.params)
    params["final.users"] = result.final_users
    params["final.items"] = result.final_items
    return params


def write_seed_outputs(out: Path, cfg: RunConfig, prepared: PreparedRun, seed: int, result: TrainingResult):
    echo = cfg.with_override("run.seeds", [seed]).echo()
    save_checkpoint(out / f"checkpoint_seed{seed}.hwck", checkpoint_params(result), echo)
    val_column = f"val_ndcg{cfg.eval.val_k}"
    history = [{**h.model_dump(exclude={"val_ndcg"}), val_column: h.val_ndcg} for h in result.history]
    write_csv(history, out / f"history_seed{seed}.csv", HISTORY_COLUMNS + [val_column])

    split = prepared.split
    reports = []
    for name in ("val", "test"):
        graph = getattr(split, name)
        if graph.n_interactions == 0:
            warn(f"seed {seed}: {name} split is empty, skipped")
            continue
        reports.append(
            evaluation_service.evaluate_embeddings(
                result.final_users, result.final_items, graph, split.train, cfg.eval.ks, name, seed
            )
        )
    write_csv([row for r in reports for row in r.rows()], out / f"report_seed{seed}.csv", REPORT_COLUMNS)
    return reports


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.run.output_dir)
    write_text(cfg.echo(), out / "resolved_config.json")

    prepared = training_service.prepare(cfg)
    status(True, f"Data ready: {dataset_service.dataset_stats(prepared.graph).summary()}")
    if prepared.text is None:
        warn("No text embeddings; training structural-only")

    reports = []
    for seed, result in training_service.run_seeds(prepared, cfg.run.seeds):
        reports.extend(write_seed_outputs(out, cfg, prepared, seed, result))
        status(True, f"seed {seed}: best epoch {result.best_epoch}, val NDCG@{cfg.eval.val_k} {result.best_val:.4f}")

    summary = evaluation_service.summarize_runs(reports)
    write_csv([s.model_dump(exclude={"variant"}) for s in summary], out / "summary.csv", SUMMARY_COLUMNS)
    status(True, f"Wrote {len(cfg.run.seeds)} checkpoint(s) to {out}")
    return 0
