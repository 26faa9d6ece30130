"""Base embeddings, stream routing, intermediate and late fusion, scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from ..core.config import RunConfig
from ..core.exceptions import ShapeError
from ..models.domain import TextEmbeddings, WaveletBasis
from ..utils import tape as T
from ..utils.tape import Tape, Var
from .encoder_service import HdnnParams, WaveletParams, hdnn_encode, wavelet_encode

CHANNELS = ("user", "item")
# softplus(FILTER_INIT) == 1
FILTER_INIT = math.log(math.e - 1.0)

ParameterSet = dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelLayout:
    """Which components a model instance carries."""

    dim: int = 32
    hdnn: bool = True
    hdnn_layers: int = 3
    wavelet: bool = True
    wavelet_layers: int = 3
    combine: Literal["add", "concat"] = "add"
    share_filter: bool = False
    text: bool = True
    late: Literal["mean", "learned_scalar"] = "mean"

    @classmethod
    def from_config(cls, cfg: RunConfig, text_available: bool) -> ModelLayout:
        return cls(
            dim=cfg.model.dim,
            hdnn=cfg.hdnn.enabled,
            hdnn_layers=cfg.hdnn.layers,
            wavelet=cfg.wavelet.enabled,
            wavelet_layers=cfg.wavelet.layers,
            combine=cfg.wavelet.combine,
            share_filter=cfg.wavelet.share_filter,
            text=cfg.fusion.enabled and cfg.text.enabled and text_available,
            late=cfg.fusion.late,
        )

    @classmethod
    def matrix_factorization(cls, dim: int) -> ModelLayout:
        """Plain dot-product model: no encoders, no text."""
        return cls(dim=dim, hdnn=False, wavelet=False, text=False)


@dataclass
class FusedEmbeddings:
    users: Var
    items: Var
    # Per-layer (z, gamma) pairs for the contrastive loss, l = 0..L.
    user_pairs: list[tuple[Var, Var]] = field(default_factory=list)
    item_pairs: list[tuple[Var, Var]] = field(default_factory=list)
    # Intermediate-fused output of each encoder per channel, before late fusion.
    encoder_outputs: dict[tuple[str, str], Var] = field(default_factory=dict)


def _xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))


def init_params(
    n_users: int,
    n_items: int,
    d: int,
    d_text: Optional[int],
    seed: int,
    layout: Optional[ModelLayout] = None,
) -> ParameterSet:
    """Deterministic initialization; parameters are drawn in a fixed name order."""
    if d < 1:
        raise ValueError("embedding size must be >= 1")
    layout = layout or ModelLayout(dim=d)
    rng = np.random.default_rng(seed)
    params: ParameterSet = {
        "struct.users": _xavier(rng, n_users, d),
        "struct.items": _xavier(rng, n_items, d),
    }
    if layout.text and d_text:
        params["text_proj"] = _xavier(rng, d_text, d)

    sizes = {"user": n_users, "item": n_items}
    for c in CHANNELS:
        if layout.hdnn:
            for mlp in ("mlp1", "mlp2"):
                params[f"{c}.hdnn.{mlp}.w1"] = _xavier(rng, d, d)
                params[f"{c}.hdnn.{mlp}.b1"] = np.zeros((1, d))
                params[f"{c}.hdnn.{mlp}.w2"] = _xavier(rng, d, d)
                params[f"{c}.hdnn.{mlp}.b2"] = np.zeros((1, d))
            for ln in ("ln1", "ln2"):
                params[f"{c}.hdnn.{ln}.gain"] = np.ones((1, d))
                params[f"{c}.hdnn.{ln}.bias"] = np.zeros((1, d))
        if layout.wavelet:
            n_filters = 1 if layout.share_filter else layout.wavelet_layers
            for l in range(n_filters):
                params[f"{c}.wavelet.filter.{l}"] = np.full((sizes[c], 1), FILTER_INIT)
            for l in range(layout.wavelet_layers):
                params[f"{c}.wavelet.weight.{l}"] = _xavier(rng, d, d)

    if layout.hdnn and layout.wavelet and layout.late == "learned_scalar":
        params["fusion.late_logit"] = np.zeros((1, 1))
    return params


def register(tape: Tape, params: ParameterSet) -> dict[str, Var]:
    return {name: tape.leaf(name, value) for name, value in params.items()}


def _stream_mean(per_stream: list[tuple[Var, list[Var]]]) -> tuple[Var, list[Var]]:
    """Intermediate fusion: elementwise mean over streams, for the readout and each layer."""
    finals = [final for final, _ in per_stream]
    depth = len(per_stream[0][1])
    layers = [T.mean_of([layers[l] for _, layers in per_stream]) for l in range(depth)]
    return T.mean_of(finals), layers


def forward_full(
    vars_: dict[str, Var],
    layout: ModelLayout,
    operators: dict[str, object],
    bases: dict[str, Optional[WaveletBasis]],
    text: Optional[dict[str, Optional[TextEmbeddings]]] = None,
) -> FusedEmbeddings:
    """Route structural and textual streams through both encoders and fuse.

    Without text (or with ``layout.text`` off) only the structural stream runs.
    """
    tape = vars_["struct.users"].tape
    use_text = layout.text and text is not None and "text_proj" in vars_
    outputs: dict[str, Var] = {}
    pairs: dict[str, list[tuple[Var, Var]]] = {}
    encoder_outputs: dict[tuple[str, str], Var] = {}

    for c in CHANNELS:
        struct = vars_[f"struct.{c}s"]
        streams = [struct]
        if use_text:
            emb = text.get(c)
            if emb is not None:
                if emb.matrix.shape[0] != struct.shape[0]:
                    raise ShapeError(
                        f"{c} text embeddings have {emb.matrix.shape[0]} rows, expected {struct.shape[0]}"
                    )
                streams.append(T.matmul(tape.constant(emb.matrix), vars_["text_proj"]))

        fused: dict[str, tuple[Var, list[Var]]] = {}
        if layout.hdnn:
            params = HdnnParams.from_vars(vars_, f"{c}.hdnn", layout.hdnn_layers)
            fused["hdnn"] = _stream_mean(
                [hdnn_encode(s, operators[c], params) for s in streams]
            )
        if layout.wavelet:
            params = WaveletParams.from_vars(
                vars_, f"{c}.wavelet", layout.wavelet_layers, layout.share_filter, layout.combine
            )
            fused["wavelet"] = _stream_mean(
                [wavelet_encode(s, bases[c], params) for s in streams]
            )

        for name, (final, _) in fused.items():
            encoder_outputs[(c, name)] = final

        if "hdnn" in fused and "wavelet" in fused:
            a, b = fused["hdnn"][0], fused["wavelet"][0]
            if layout.late == "learned_scalar":
                alpha = T.sigmoid(vars_["fusion.late_logit"])
                outputs[c] = T.add(b, T.mul(T.add(a, T.scale(b, -1.0)), alpha))
            else:
                outputs[c] = T.mean_of([a, b])
            pairs[c] = list(zip(fused["hdnn"][1], fused["wavelet"][1]))
        elif fused:
            outputs[c] = next(iter(fused.values()))[0]
            pairs[c] = []
        else:
            outputs[c] = T.mean_of(streams)
            pairs[c] = []

    return FusedEmbeddings(
        users=outputs["user"],
        items=outputs["item"],
        user_pairs=pairs["user"],
        item_pairs=pairs["item"],
        encoder_outputs=encoder_outputs,
    )


def infer_embeddings(
    params: ParameterSet,
    layout: ModelLayout,
    operators: dict[str, object],
    bases: dict[str, Optional[WaveletBasis]],
    text: Optional[dict[str, Optional[TextEmbeddings]]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Final user and item embeddings without keeping gradients."""
    tape = Tape()
    vars_ = {name: tape.constant(value) for name, value in params.items()}
    fused = forward_full(vars_, layout, operators, bases, text)
    return fused.users.value.copy(), fused.items.value.copy()


def score(users_emb: np.ndarray, items_emb: np.ndarray, u: int, i: int) -> float:
    """Predicted preference <e_u, e_i>."""
    if not 0 <= u < users_emb.shape[0]:
        raise IndexError(f"user id {u} out of range [0, {users_emb.shape[0]})")
    if not 0 <= i < items_emb.shape[0]:
        raise IndexError(f"item id {i} out of range [0, {items_emb.shape[0]})")
    return float(users_emb[u] @ items_emb[i])
