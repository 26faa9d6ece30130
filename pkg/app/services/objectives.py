"""Training objectives on the tape and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core.config import TrainConfig
from ..core.exceptions import NumericError, ShapeError
from ..utils import tape as T
from ..utils.tape import Var

REDUCTIONS = ("sum", "mean")


def bpr_loss(scores_pos: Var, scores_neg: Var) -> Var:
    """Mean of -log sigmoid(pos - neg) over the batch."""
    if scores_pos.shape != scores_neg.shape:
        raise ShapeError(f"bpr_loss: {scores_pos.shape} vs {scores_neg.shape}")
    margins = T.add(scores_pos, T.scale(scores_neg, -1.0))
    n = scores_pos.shape[0]
    return T.scale(T.total(T.log_sigmoid(margins)), -1.0 / n)


def infonce(z: Var, gamma: Var, temperature: float, reduction: str = "sum") -> Var:
    """-log softmax of cosine similarities, positives on the diagonal.

    ``reduction`` is ``"sum"`` or ``"mean"`` over rows. Zero-norm rows have
    similarity 0 with everything.
    """
    if z.shape != gamma.shape:
        raise ShapeError(f"infonce: {z.shape} vs {gamma.shape}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if reduction not in REDUCTIONS:
        raise ValueError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")
    zn = T.l2_normalize_rows(z)
    gn = T.l2_normalize_rows(gamma)
    logits = T.scale(T.matmul(zn, T.transpose(gn)), 1.0 / temperature)
    positives = T.scale(T.row_dot(zn, gn), 1.0 / temperature)
    loss = T.total(T.add(T.logsumexp_rows(logits), T.scale(positives, -1.0)))
    if reduction == "mean":
        loss = T.scale(loss, 1.0 / z.shape[0])
    return loss


def infonce_cross_view(
    z_layers: list[Var],
    gamma_layers: list[Var],
    temperature: float,
    reduction: str = "sum",
) -> Var:
    """Contrastive loss summed over paired layers l = 0..min(L_z, L_gamma)."""
    pairs = list(zip(z_layers, gamma_layers))
    if not pairs:
        raise ValueError("infonce_cross_view needs at least one layer pair")
    losses = [infonce(z, g, temperature, reduction) for z, g in pairs]
    out = losses[0]
    for loss in losses[1:]:
        out = T.add(out, loss)
    return out


def l2_penalty(embeddings: list[Var]) -> Var:
    """Sum of squared entries over ``embeddings``."""
    out = None
    for e in embeddings:
        term = T.total(T.mul(e, e))
        out = term if out is None else T.add(out, term)
    return out


def total_loss(
    bpr: Var,
    ssl_users: Var | None,
    ssl_items: Var | None,
    embeddings: list[Var],
    cfg: TrainConfig,
) -> Var:
    """L = BPR + ssl_weight * (ssl_u + ssl_i) + reg_weight * ||E||^2."""
    loss = bpr
    ssl = [s for s in (ssl_users, ssl_items) if s is not None]
    if ssl and cfg.ssl_weight > 0:
        loss = T.add(loss, T.scale(ssl[0] if len(ssl) == 1 else T.add(*ssl), cfg.ssl_weight))
    if embeddings and cfg.reg_weight > 0:
        loss = T.add(loss, T.scale(l2_penalty(embeddings), cfg.reg_weight))
    return loss


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
    t: int | None = None,
) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update. Each tensor keeps its own moments.

    Returns new parameter arrays; ``state`` is updated in place.
    """
    step = state.t + 1 if t is None else t
    if step < 1:
        raise ValueError("adam step must be >= 1")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for '{name}' at step {step}")

    updated = dict(params)
    bc1 = 1.0 - cfg.beta1**step
    bc2 = 1.0 - cfg.beta2**step
    for name, g in grads.items():
        if name not in params:
            continue
        if params[name].shape != g.shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, expected {params[name].shape}")
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        state.m[name], state.v[name] = m, v
        updated[name] = params[name] - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    state.t = step
    return updated
