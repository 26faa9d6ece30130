"""Data preparation, BPR sampling, the training loop and multi-seed runs."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from tqdm import tqdm

from ..core.config import RunConfig, settings
from ..core.exceptions import ConfigError, DataError, NumericError, ShapeError
from ..core.logging import get_logger
from ..models.domain import (
    BprBatch,
    Hypergraph,
    InteractionGraph,
    SplitBundle,
    SyntheticLabels,
    TextEmbeddings,
    TrainingResult,
    WaveletBasis,
)
from ..models.schemas import HistoryRow
from ..utils import tape as T
from ..utils.sparse import SparseOperator, build_basis, propagation_operator
from ..utils.tape import Tape
from .dataset_service import dataset_service
from .evaluation_service import evaluation_service
from .fusion_service import ModelLayout, forward_full, infer_embeddings, init_params, register
from .objectives import AdamState, adam_step, bpr_loss, infonce_cross_view, l2_penalty, total_loss

_log = get_logger(__name__)


class BprSampler:
    """Uniform (user, positive) draws over train interactions, negatives by rejection.

    Users who interacted with every item have no negative and are skipped.
    """

    def __init__(self, train: InteractionGraph):
        if train.n_interactions == 0:
            raise DataError("cannot sample from an empty train split")
        self.train = train
        self.keys = np.sort(train.users * train.n_items + train.items)
        counts = np.bincount(train.users, minlength=train.n_users)
        saturated = np.flatnonzero(counts >= train.n_items)
        if saturated.size:
            _log.warning("users with no negative item skipped", count=int(saturated.size))
        self.eligible = np.flatnonzero(counts[train.users] < train.n_items)
        if self.eligible.size == 0:
            raise DataError("no user has a non-interacted item to sample")

    def _seen(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        q = users * self.train.n_items + items
        pos = np.searchsorted(self.keys, q)
        pos = np.minimum(pos, self.keys.size - 1)
        return self.keys[pos] == q

    def sample(self, batch_size: int, rng: np.random.Generator) -> BprBatch:
        pick = self.eligible[rng.integers(self.eligible.size, size=batch_size)]
        users = self.train.users[pick]
        pos = self.train.items[pick]
        neg = rng.integers(self.train.n_items, size=batch_size)
        bad = self._seen(users, neg)
        while bad.any():
            neg[bad] = rng.integers(self.train.n_items, size=int(bad.sum()))
            bad = self._seen(users, neg)
        return BprBatch(users=users, pos_items=pos, neg_items=neg)


def sample_bpr_batch(train: InteractionGraph, batch_size: int, rng: np.random.Generator) -> BprBatch:
    return BprSampler(train).sample(batch_size, rng)


@dataclass
class PreparedRun:
    """Everything a training run reads: split, operators, bases and text."""

    cfg: RunConfig
    graph: InteractionGraph
    split: SplitBundle
    hypergraphs: dict[str, Hypergraph]
    operators: dict[str, SparseOperator]
    bases: dict[str, Optional[WaveletBasis]]
    text: Optional[dict[str, Optional[TextEmbeddings]]] = None
    labels: Optional[SyntheticLabels] = None
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def d_text(self) -> Optional[int]:
        if not self.text:
            return None
        return next((e.dim for e in self.text.values() if e is not None), None)

    def layout(self, cfg: Optional[RunConfig] = None) -> ModelLayout:
        return ModelLayout.from_config(cfg or self.cfg, self.text is not None)


class TrainingService:
    """Prepares data, runs the BPR + contrastive training loop, and multi-seed runs."""

    # ------------------------------------------------------------------
    # Preparation
    # ------------------------------------------------------------------

    def load_graph(self, cfg: RunConfig) -> tuple[InteractionGraph, Optional[SyntheticLabels]]:
        if cfg.data.interactions:
            path = Path(cfg.data.interactions)
            if not path.is_file():
                raise ConfigError(f"data.interactions points to a missing file: {path}")
            return dataset_service.load_interactions(path), None
        if cfg.data.synthetic is not None:
            s = cfg.data.synthetic
            return dataset_service.generate_synthetic_heterophilic(
                s.users, s.items, s.user_groups, s.genres, s.cross_rate, s.per_user, s.seed
            )
        raise ConfigError("config names no data source: set data.interactions or [data.synthetic]")

    def load_text(
        self, cfg: RunConfig, graph: InteractionGraph, labels: Optional[SyntheticLabels]
    ) -> Optional[dict[str, Optional[TextEmbeddings]]]:
        """Text embeddings from files, seeded synthesis, or None (structural-only).

        Under ``text.synth`` a missing or unset file falls back to seeded
        pseudo-random matrices for both entity kinds.
        """
        t = cfg.text
        if not (t.enabled and cfg.fusion.enabled):
            return None
        paths = [t.path_users, t.path_items]
        files_ready = all(p and Path(p).is_file() for p in paths)
        if t.path_users and t.path_items and (files_ready or not t.synth):
            text = {
                "user": dataset_service.load_text_embeddings(t.path_users, graph.n_users, "user"),
                "item": dataset_service.load_text_embeddings(t.path_items, graph.n_items, "item"),
            }
        elif t.synth or labels is not None:
            if t.synth and any(paths):
                _log.warning("text embedding files missing, synthesizing", dim=t.synth_dim, seed=t.synth_seed)
            user_labels = labels.user_groups if labels is not None and not t.synth else None
            item_labels = labels.item_genres if labels is not None and not t.synth else None
            text = {
                "user": dataset_service.synthesize_text_embeddings(
                    graph.n_users, t.synth_dim, t.synth_seed, "user", user_labels
                ),
                "item": dataset_service.synthesize_text_embeddings(
                    graph.n_items, t.synth_dim, t.synth_seed, "item", item_labels
                ),
            }
        else:
            _log.warning("no text embeddings configured, running structural-only")
            return None
        if text["user"].dim != text["item"].dim:
            raise ShapeError(
                f"user text dim {text['user'].dim} differs from item text dim {text['item'].dim}"
            )
        return text

    def prepare(self, cfg: RunConfig) -> PreparedRun:
        graph, labels = self.load_graph(cfg)
        split = dataset_service.split_interactions(graph, cfg.data.split_ratios, cfg.data.split_seed)
        hypergraphs = {
            "user": dataset_service.build_user_hypergraph(split.train),
            "item": dataset_service.build_item_hypergraph(split.train),
        }
        operators = {c: propagation_operator(hg) for c, hg in hypergraphs.items()}
        bases: dict[str, Optional[WaveletBasis]] = {"user": None, "item": None}
        if cfg.wavelet.enabled:
            w = cfg.wavelet
            bases = {
                c: build_basis(hg, w.scale, w.mode, w.cheb_order, cfg.spectral.max_exact_n)
                for c, hg in hypergraphs.items()
            }

        diagnostics: dict[str, float] = {}
        if labels is not None:
            diagnostics = {
                "home_genre_share": dataset_service.home_genre_share(split.train, labels),
                "item_hyperedge_heterophily": dataset_service.hyperedge_heterophily(
                    hypergraphs["item"], labels.item_genres
                ),
                "user_hyperedge_heterophily": dataset_service.hyperedge_heterophily(
                    hypergraphs["user"], labels.user_groups
                ),
            }
        unified = dataset_service.build_unified_hypergraph(split.train)
        diagnostics["unified_edges"] = float(unified.n_edges)
        _log.info("run prepared", **diagnostics)

        return PreparedRun(
            cfg=cfg,
            graph=graph,
            split=split,
            hypergraphs=hypergraphs,
            operators=operators,
            bases=bases,
            text=self.load_text(cfg, graph, labels),
            labels=labels,
            diagnostics=diagnostics,
        )

    # ------------------------------------------------------------------
    # Training loop
    # ------------------------------------------------------------------

    def _validate(self, prepared: PreparedRun, layout: ModelLayout, params, seed: int) -> float:
        split = prepared.split
        if split.val.n_interactions == 0:
            return math.nan
        users, items = infer_embeddings(params, layout, prepared.operators, prepared.bases, prepared.text)
        k = prepared.cfg.eval.val_k
        report = evaluation_service.evaluate_embeddings(
            users, items, split.val, split.train, [k], "val", seed
        )
        return report.at(k).ndcg

    def train(
        self,
        prepared: PreparedRun,
        seed: Optional[int] = None,
        layout: Optional[ModelLayout] = None,
        cfg: Optional[RunConfig] = None,
    ) -> TrainingResult:
        """Adam on BPR + cross-view InfoNCE + L2; keeps the best-validation parameters."""
        cfg = cfg or prepared.cfg
        tc = cfg.train
        seed = tc.seed if seed is None else seed
        layout = layout or prepared.layout(cfg)
        log = _log.bind(seed=seed)
        train_graph = prepared.split.train
        split = prepared.split

        params = init_params(
            train_graph.n_users, train_graph.n_items, layout.dim, prepared.d_text, seed, layout
        )
        result = TrainingResult(params={k: v.copy() for k, v in params.items()})
        if tc.epochs == 0:
            result.best_val = self._validate(prepared, layout, params, seed)
            return self._finish(result, prepared, layout)

        rng = np.random.default_rng(seed)
        sampler = BprSampler(train_graph)
        state = AdamState()
        n_batches = max(1, math.ceil(train_graph.n_interactions / tc.batch_size))
        use_ssl = tc.contrastive and tc.ssl_weight > 0
        best = -math.inf
        stale = 0

        epochs = tqdm(range(1, tc.epochs + 1), desc=f"seed {seed}", disable=not settings.progress)
        for epoch in epochs:
            sums = np.zeros(3)
            for _ in range(n_batches):
                batch = sampler.sample(tc.batch_size, rng)
                tape = Tape()
                vars_ = register(tape, params)
                fused = forward_full(vars_, layout, prepared.operators, prepared.bases, prepared.text)

                u = T.gather_rows(fused.users, batch.users)
                p = T.gather_rows(fused.items, batch.pos_items)
                n = T.gather_rows(fused.items, batch.neg_items)
                bpr = bpr_loss(T.row_dot(u, p), T.row_dot(u, n))

                ssl_u = ssl_i = None
                if use_ssl and fused.user_pairs:
                    uid = np.unique(batch.users)
                    iid = np.unique(np.concatenate([batch.pos_items, batch.neg_items]))
                    ssl_u = infonce_cross_view(
                        [T.gather_rows(z, uid) for z, _ in fused.user_pairs],
                        [T.gather_rows(g, uid) for _, g in fused.user_pairs],
                        tc.temperature,
                        tc.ssl_reduction,
                    )
                    ssl_i = infonce_cross_view(
                        [T.gather_rows(z, iid) for z, _ in fused.item_pairs],
                        [T.gather_rows(g, iid) for _, g in fused.item_pairs],
                        tc.temperature,
                        tc.ssl_reduction,
                    )
                embeddings = [vars_["struct.users"], vars_["struct.items"]]
                loss = total_loss(bpr, ssl_u, ssl_i, embeddings, tc)
                if not np.isfinite(loss.value).all():
                    raise NumericError(f"non-finite loss at epoch {epoch} (seed {seed})")

                grads = tape.backward(loss)
                params = adam_step(params, grads, state, tc)

                ssl_value = sum(float(s.value[0, 0]) for s in (ssl_u, ssl_i) if s is not None)
                reg_value = float(l2_penalty(embeddings).value[0, 0]) * tc.reg_weight
                sums += (float(bpr.value[0, 0]), ssl_value, reg_value)

            val = self._validate(prepared, layout, params, seed)
            means = sums / n_batches
            result.history.append(
                HistoryRow(
                    epoch=epoch, bpr=float(means[0]), ssl=float(means[1]), reg=float(means[2]), val_ndcg=val
                )
            )
            log.info(
                "epoch", epoch=epoch, bpr=round(float(means[0]), 6), ssl=round(float(means[1]), 6), val_ndcg=val
            )

            if math.isnan(val):
                # Nothing to select on: keep the latest parameters.
                result.params = {k: v.copy() for k, v in params.items()}
                result.best_epoch = epoch
                result.best_val = val
                continue
            if val > best:
                best = val
                stale = 0
                result.params = {k: v.copy() for k, v in params.items()}
                result.best_epoch = epoch
                result.best_val = val
            else:
                stale += 1
                if stale >= tc.patience:
                    log.info("early stop", epoch=epoch, best_epoch=result.best_epoch)
                    break
        return self._finish(result, prepared, layout)

    def _finish(self, result: TrainingResult, prepared: PreparedRun, layout: ModelLayout) -> TrainingResult:
        result.final_users, result.final_items = infer_embeddings(
            result.params, layout, prepared.operators, prepared.bases, prepared.text
        )
        return result

    def run_seeds(
        self,
        prepared: PreparedRun,
        seeds: list[int],
        layout: Optional[ModelLayout] = None,
        cfg: Optional[RunConfig] = None,
    ) -> list[tuple[int, TrainingResult]]:
        """Independent trainings, one per seed, at most ``settings.threads`` at a time."""
        workers = max(1, min(settings.threads, len(seeds)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: self.train(prepared, s, layout, cfg), seeds))
        return list(zip(seeds, results))


# Global training service instance
training_service = TrainingService()
