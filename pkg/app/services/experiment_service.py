"""Baselines, ablations and parameter sweeps built on the trainer and evaluator."""

from typing import Any, Iterable, Optional

import numpy as np

from ..core.config import RunConfig, parse_run_config
from ..core.exceptions import ConfigError
from ..core.logging import get_logger
from ..models.domain import TrainingResult
from ..models.schemas import AblationRow, MetricReport, SweepRow
from .evaluation_service import evaluation_service
from .fusion_service import ModelLayout
from .training_service import PreparedRun, training_service

_log = get_logger(__name__)

ABLATABLE = ("hdnn", "wavelet", "fusion", "contrastive")
# Sections a sweep can vary without rebuilding data, operators or bases.
_REUSABLE_SECTIONS = {"model", "hdnn", "train", "eval", "fusion"}


def _ablated_config(cfg: RunConfig, disable: Iterable[str]) -> RunConfig:
    data = cfg.model_dump()
    for part in disable:
        if part in ("hdnn", "wavelet"):
            data[part]["enabled"] = False
        elif part == "fusion":
            data["text"]["enabled"] = False
        elif part == "contrastive":
            data["train"]["contrastive"] = False
        else:
            raise ConfigError(f"Unknown component to disable: {part!r} (choose from {', '.join(ABLATABLE)})")
    if not data["hdnn"]["enabled"] and not data["wavelet"]["enabled"]:
        raise ConfigError("cannot disable both hdnn and wavelet")
    return parse_run_config(data)


def ablation_variants(cfg: RunConfig, disable: Iterable[str]) -> list[tuple[str, RunConfig]]:
    """``full`` plus one variant per request; ``a+b`` removes both components in one variant."""
    variants: list[tuple[str, RunConfig]] = [("full", cfg)]
    for request in dict.fromkeys(disable):
        parts = [p.strip() for p in request.split("+")]
        variants.append((f"w/o {'+'.join(parts)}", _ablated_config(cfg, parts)))
    return variants


def parse_sweep_values(raw_values: str) -> list[Any]:
    """``1..5`` (inclusive integer range) or a comma list of numbers/strings."""
    raw_values = raw_values.strip()
    if ".." in raw_values:
        lo, _, hi = raw_values.partition("..")
        try:
            lo_i, hi_i = int(lo), int(hi)
        except ValueError:
            raise ConfigError(f"Bad sweep range {raw_values!r}: expected integers like 1..5")
        if hi_i < lo_i:
            raise ConfigError(f"Empty sweep range {raw_values!r}")
        return list(range(lo_i, hi_i + 1))
    values: list[Any] = []
    for raw in raw_values.split(","):
        raw = raw.strip()
        if not raw:
            raise ConfigError(f"Empty value in sweep list {raw_values!r}")
        for cast in (int, float):
            try:
                values.append(cast(raw))
                break
            except ValueError:
                continue
        else:
            values.append(raw)
    return values


class ExperimentService:
    def train_and_evaluate(
        self,
        prepared: PreparedRun,
        seed: int,
        cfg: Optional[RunConfig] = None,
        layout: Optional[ModelLayout] = None,
        splits: tuple[str, ...] = ("test",),
    ) -> tuple[TrainingResult, list[MetricReport]]:
        cfg = cfg or prepared.cfg
        result = training_service.train(prepared, seed, layout, cfg)
        return result, self._evaluate(prepared, cfg, seed, result, splits)

    def train_and_evaluate_seeds(
        self,
        prepared: PreparedRun,
        seeds: list[int],
        cfg: Optional[RunConfig] = None,
        layout: Optional[ModelLayout] = None,
        splits: tuple[str, ...] = ("test",),
    ) -> list[MetricReport]:
        """``train_and_evaluate`` for every seed, trained concurrently, reports in seed order."""
        cfg = cfg or prepared.cfg
        reports: list[MetricReport] = []
        for seed, result in training_service.run_seeds(prepared, seeds, layout, cfg):
            reports.extend(self._evaluate(prepared, cfg, seed, result, splits))
        return reports

    @staticmethod
    def _evaluate(
        prepared: PreparedRun, cfg: RunConfig, seed: int, result: TrainingResult, splits: tuple[str, ...]
    ) -> list[MetricReport]:
        return [
            evaluation_service.evaluate_embeddings(
                result.final_users,
                result.final_items,
                getattr(prepared.split, name),
                prepared.split.train,
                cfg.eval.ks,
                name,
                seed,
            )
            for name in splits
        ]

    def mf_bpr_baseline(self, prepared: PreparedRun, d: int, epochs: int, seed: int) -> TrainingResult:
        """Plain embedding dot-product model trained with the same loop."""
        cfg = prepared.cfg.with_override("train.epochs", epochs)
        return training_service.train(prepared, seed, ModelLayout.matrix_factorization(d), cfg)

    def run_ablation(
        self,
        cfg: RunConfig,
        disable: Iterable[str],
        include_baselines: bool = False,
        seeds: Optional[list[int]] = None,
    ) -> list[AblationRow]:
        """Full model and one row group per requested removal, identical seeds throughout.

        Variants only switch components off, so they all share the full model's
        split, operators, bases and text.
        """
        seeds = seeds or cfg.run.seeds
        variants = ablation_variants(cfg, disable)
        prepared = training_service.prepare(cfg)

        rows: list[AblationRow] = []
        for name, variant_cfg in variants:
            reports = self.train_and_evaluate_seeds(prepared, seeds, cfg=variant_cfg)
            rows.extend(self._rows(name, reports))
            _log.info("ablation variant done", variant=name)

        if include_baselines:
            split = prepared.split
            for seed in seeds:
                pop = evaluation_service.evaluate_popularity(split.test, split.train, cfg.eval.ks, "test", seed)
                rows.extend(self._rows("popularity", [pop]))
            mf_layout = ModelLayout.matrix_factorization(cfg.model.dim)
            reports = self.train_and_evaluate_seeds(prepared, seeds, layout=mf_layout)
            rows.extend(self._rows("mf_bpr", reports))
        return rows

    @staticmethod
    def _rows(variant: str, reports: list[MetricReport]) -> list[AblationRow]:
        return [
            AblationRow(variant=variant, seed=r.seed, split=r.split, k=m.k, recall=m.recall, ndcg=m.ndcg)
            for r in reports
            for m in r.metrics
        ]

    def run_sweep(
        self,
        cfg: RunConfig,
        param: str,
        values: list[Any],
        seeds: Optional[list[int]] = None,
    ) -> list[SweepRow]:
        """One row per value: test metrics averaged over seeds."""
        seeds = seeds or cfg.run.seeds
        variant_cfgs = [cfg.with_override(param, v) for v in values]
        shared: Optional[PreparedRun] = None
        if param.partition(".")[0] in _REUSABLE_SECTIONS:
            shared = training_service.prepare(cfg)

        rows: list[SweepRow] = []
        for value, variant_cfg in zip(values, variant_cfgs):
            prepared = shared or training_service.prepare(variant_cfg)
            reports = self.train_and_evaluate_seeds(prepared, seeds, cfg=variant_cfg)
            metrics: dict[str, float] = {}
            for k in variant_cfg.eval.ks:
                metrics[f"recall@{k}"] = float(np.mean([r.at(k).recall for r in reports]))
                metrics[f"ndcg@{k}"] = float(np.mean([r.at(k).ndcg for r in reports]))
            rows.append(SweepRow(param=param, value=value, metrics=metrics))
            _log.info("sweep point done", param=param, value=value)
        return rows


# Global experiment service instance
experiment_service = ExperimentService()
