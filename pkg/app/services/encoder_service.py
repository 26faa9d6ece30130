"""Hypergraph encoders built on the tape.

``hdnn_*``: heterophily-aware diffusion layers,
    X_e = LN(P MLP1(X)) + X,   X_v = LN(P MLP2(X_e)) + X_e.
``wavelet_*``: wavelet hypergraph convolution,
    X' = Theta diag(Lambda) Theta' X W + X.

Both encoders read out the mean over the input and every layer output, and
also return those per-layer tensors (index 0 is the input) for the
cross-view contrastive loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..core.exceptions import ShapeError
from ..models.domain import WaveletBasis
from ..utils import tape as T
from ..utils.tape import Var


@dataclass(frozen=True)
class Mlp:
    """Two-layer perceptron relu(x W1 + b1) W2 + b2."""

    w1: Var
    b1: Var
    w2: Var
    b2: Var

    def __call__(self, x: Var) -> Var:
        h = T.relu(T.add(T.matmul(x, self.w1), self.b1))
        return T.add(T.matmul(h, self.w2), self.b2)


@dataclass(frozen=True)
class HdnnParams:
    mlp1: Mlp
    mlp2: Mlp
    ln1_gain: Var
    ln1_bias: Var
    ln2_gain: Var
    ln2_bias: Var
    layers: int

    @classmethod
    def from_vars(cls, vars_: dict[str, Var], prefix: str, layers: int) -> HdnnParams:
        def mlp(name):
            return Mlp(*(vars_[f"{prefix}.{name}.{p}"] for p in ("w1", "b1", "w2", "b2")))

        return cls(
            mlp1=mlp("mlp1"),
            mlp2=mlp("mlp2"),
            ln1_gain=vars_[f"{prefix}.ln1.gain"],
            ln1_bias=vars_[f"{prefix}.ln1.bias"],
            ln2_gain=vars_[f"{prefix}.ln2.gain"],
            ln2_bias=vars_[f"{prefix}.ln2.bias"],
            layers=layers,
        )


def hdnn_layer(x: Var, propagation, params: HdnnParams) -> tuple[Var, Var]:
    """One diffusion layer; returns (x_e, x_v)."""
    if propagation.shape[1] != x.shape[0]:
        raise ShapeError(f"propagation {propagation.shape} vs embeddings {x.shape}")
    h1 = T.sparse_apply(propagation, params.mlp1(x))
    x_e = T.add(T.layer_norm(h1, params.ln1_gain, params.ln1_bias), x)
    h2 = T.sparse_apply(propagation, params.mlp2(x_e))
    x_v = T.add(T.layer_norm(h2, params.ln2_gain, params.ln2_bias), x_e)
    return x_e, x_v


def hdnn_encode(x0: Var, propagation, params: HdnnParams) -> tuple[Var, list[Var]]:
    """Stack ``params.layers`` diffusion layers; readout is the layer mean."""
    if params.layers < 1:
        raise ValueError("hdnn needs at least one layer")
    outputs = [x0]
    x = x0
    for _ in range(params.layers):
        _, x = hdnn_layer(x, propagation, params)
        outputs.append(x)
    return T.mean_of(outputs), outputs


@dataclass(frozen=True)
class WaveletParams:
    """Per-layer filters (pre-softplus, n x 1) and weights (d x d).

    With a shared filter, ``filters`` holds a single entry used by every layer.
    """

    filters: tuple[Var, ...]
    weights: tuple[Var, ...]
    layers: int
    combine: Literal["add", "concat"] = "add"

    @classmethod
    def from_vars(
        cls,
        vars_: dict[str, Var],
        prefix: str,
        layers: int,
        share_filter: bool = False,
        combine: str = "add",
    ) -> WaveletParams:
        n_filters = 1 if share_filter else layers
        return cls(
            filters=tuple(vars_[f"{prefix}.filter.{l}"] for l in range(n_filters)),
            weights=tuple(vars_[f"{prefix}.weight.{l}"] for l in range(layers)),
            layers=layers,
            combine=combine,
        )

    def filter_for(self, layer: int) -> Var:
        return self.filters[layer if len(self.filters) > 1 else 0]


def _averaging_projection(tape: T.Tape, d: int) -> Var:
    """Fixed [I; I] / 2 mapping a 2d-wide concat back to d columns."""
    return tape.constant(np.vstack([np.eye(d), np.eye(d)]) * 0.5)


def wavelet_layer(
    x: Var,
    basis: WaveletBasis,
    lambda_diag: Var,
    weight: Var,
    combine: str = "add",
) -> Var:
    """Theta diag(lambda) Theta' x W combined with x (residual add or concat)."""
    if basis.n != x.shape[0] or lambda_diag.shape != (x.shape[0], 1):
        raise ShapeError(
            f"wavelet basis n={basis.n}, filter {lambda_diag.shape}, embeddings {x.shape}"
        )
    spectral = T.sparse_apply(basis.theta_inv, x)
    spectral = T.mul(spectral, lambda_diag)
    spectral = T.sparse_apply(basis.theta, spectral)
    conv = T.matmul(spectral, weight)
    if combine == "concat":
        joined = T.concat_cols(conv, x)
        return T.matmul(joined, _averaging_projection(x.tape, x.shape[1]))
    return T.add(conv, x)


def wavelet_encode(x0: Var, basis: WaveletBasis, params: WaveletParams) -> tuple[Var, list[Var]]:
    """Stack wavelet layers; readout is the mean over input and layer outputs."""
    if params.layers < 1:
        raise ValueError("wavelet encoder needs at least one layer")
    outputs = [x0]
    x = x0
    for l in range(params.layers):
        lam = T.softplus(params.filter_for(l))
        x = wavelet_layer(x, basis, lam, params.weights[l], params.combine)
        outputs.append(x)
    return T.mean_of(outputs), outputs
