"""Finite-difference checks of every differentiable op and composite loss."""

from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..core.config import TrainConfig
from ..core.logging import get_logger
from ..models.domain import Hypergraph, TextEmbeddings
from ..models.schemas import GradCheckRow
from ..utils import tape as T
from ..utils.sparse import build_basis, propagation_operator
from ..utils.tape import Tape, Var, grad_check
from .encoder_service import HdnnParams, WaveletParams, hdnn_layer, wavelet_layer
from .fusion_service import ModelLayout, forward_full, init_params
from .objectives import bpr_loss, infonce_cross_view, total_loss

_log = get_logger(__name__)

TOLERANCE = 1e-4

Check = tuple[Callable[[Tape, dict[str, Var]], Var], dict[str, np.ndarray]]


def _toy_hypergraph(n_nodes: int, rng: np.random.Generator) -> Hypergraph:
    """Random hypergraph where every node sits in at least one edge."""
    n_edges = n_nodes - 1
    h = (rng.random((n_nodes, n_edges)) < 0.4).astype(float)
    h[np.arange(n_nodes), np.arange(n_nodes) % n_edges] = 1.0
    return Hypergraph(incidence=sp.csr_matrix(h), edge_weights=np.ones(n_edges), edge_keys=np.arange(n_edges))


def _weighted(out: Var, r: np.ndarray) -> Var:
    """Scalar projection <out, R> so every output coordinate carries gradient."""
    return T.total(T.mul(out, out.tape.constant(r)))


def op_checks(rng: np.random.Generator) -> dict[str, Check]:
    n, d = 4, 3
    r = rng.standard_normal((n, d))
    x = rng.standard_normal((n, d))
    op = sp.csr_matrix(rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.6))
    # Keep relu inputs clear of the kink.
    x_relu = np.where(np.abs(x) < 0.1, 0.5, x)
    idx = np.array([0, 2, 2, 3])

    return {
        "matmul": (lambda t, v: _weighted(T.matmul(v["a"], v["b"]), r),
                   {"a": rng.standard_normal((n, 2)), "b": rng.standard_normal((2, d))}),
        "sparse_apply": (lambda t, v: _weighted(T.sparse_apply(op, v["x"]), r), {"x": x}),
        "add": (lambda t, v: _weighted(T.add(v["a"], v["b"]), r),
                {"a": x, "b": rng.standard_normal((1, d))}),
        "scale": (lambda t, v: _weighted(T.scale(v["x"], -1.7), r), {"x": x}),
        "relu": (lambda t, v: _weighted(T.relu(v["x"]), r), {"x": x_relu}),
        "softplus": (lambda t, v: _weighted(T.softplus(v["x"]), r), {"x": x}),
        "sigmoid": (lambda t, v: _weighted(T.sigmoid(v["x"]), r), {"x": x}),
        "layer_norm": (lambda t, v: _weighted(T.layer_norm(v["x"], v["g"], v["b"]), r),
                       {"x": x, "g": rng.standard_normal((1, d)), "b": rng.standard_normal((1, d))}),
        "concat_rows": (lambda t, v: _weighted(T.concat_rows(v["a"], v["b"]), np.vstack([r, r[:1]])),
                        {"a": x, "b": rng.standard_normal((1, d))}),
        "concat_cols": (lambda t, v: _weighted(T.concat_cols(v["a"], v["b"]), np.hstack([r, r[:, :1]])),
                        {"a": x, "b": rng.standard_normal((n, 1))}),
        "mean_rows": (lambda t, v: _weighted(T.mean_rows(v["x"]), r[:1]), {"x": x}),
        "total": (lambda t, v: T.total(T.mul(v["x"], v["x"])), {"x": x}),
        "row_dot": (lambda t, v: _weighted(T.row_dot(v["a"], v["b"]), r[:, :1]),
                    {"a": x, "b": rng.standard_normal((n, d))}),
        "l2_normalize_rows": (lambda t, v: _weighted(T.l2_normalize_rows(v["x"]), r), {"x": x}),
        "log_sigmoid": (lambda t, v: _weighted(T.log_sigmoid(v["x"]), r), {"x": x}),
        "logsumexp_rows": (lambda t, v: _weighted(T.logsumexp_rows(v["x"]), r[:, :1]), {"x": x}),
        "gather_rows": (lambda t, v: _weighted(T.gather_rows(v["x"], idx), r), {"x": x}),
        "mul": (lambda t, v: _weighted(T.mul(T.mul(v["a"], v["b"]), v["c"]), r),
                {"a": x, "b": rng.standard_normal((n, 1)), "c": rng.standard_normal((1, 1))}),
        "transpose": (lambda t, v: _weighted(T.transpose(v["x"]), r.T), {"x": x}),
    }


def component_checks(rng: np.random.Generator) -> dict[str, Check]:
    n, d = 5, 3
    hg = _toy_hypergraph(n, rng)
    prop = propagation_operator(hg)
    basis = build_basis(hg, scale=1.0, mode="exact")
    r = rng.standard_normal((n, d))
    x = rng.standard_normal((n, d))

    def glorot(rows, cols):
        return rng.uniform(-0.8, 0.8, size=(rows, cols))

    hdnn_leaves = {"x": x}
    for mlp in ("mlp1", "mlp2"):
        hdnn_leaves[f"h.{mlp}.w1"] = glorot(d, d)
        hdnn_leaves[f"h.{mlp}.b1"] = rng.standard_normal((1, d)) * 0.1
        hdnn_leaves[f"h.{mlp}.w2"] = glorot(d, d)
        hdnn_leaves[f"h.{mlp}.b2"] = rng.standard_normal((1, d)) * 0.1
    for ln in ("ln1", "ln2"):
        hdnn_leaves[f"h.{ln}.gain"] = 1.0 + 0.1 * rng.standard_normal((1, d))
        hdnn_leaves[f"h.{ln}.bias"] = 0.1 * rng.standard_normal((1, d))

    def hdnn(t, v):
        params = HdnnParams.from_vars(v, "h", 1)
        return _weighted(hdnn_layer(v["x"], prop, params)[1], r)

    wavelet_leaves = {"x": x, "w.filter.0": rng.standard_normal((n, 1)), "w.weight.0": glorot(d, d)}

    def wavelet(combine):
        def fn(t, v):
            params = WaveletParams.from_vars(v, "w", 1, combine=combine)
            lam = T.softplus(params.filter_for(0))
            return _weighted(wavelet_layer(v["x"], basis, lam, params.weights[0], combine), r)
        return fn

    def bpr(t, v):
        return bpr_loss(v["pos"], v["neg"])

    def infonce(t, v):
        return infonce_cross_view([v["z0"], v["z1"]], [v["g0"], v["g1"]], 0.5)

    return {
        "hdnn_layer": (hdnn, hdnn_leaves),
        "wavelet_layer[add]": (wavelet("add"), wavelet_leaves),
        "wavelet_layer[concat]": (wavelet("concat"), wavelet_leaves),
        "bpr_loss": (bpr, {"pos": rng.standard_normal((6, 1)), "neg": rng.standard_normal((6, 1))}),
        "infonce_cross_view": (
            infonce,
            {k: rng.standard_normal((4, d)) for k in ("z0", "z1", "g0", "g1")},
        ),
    }


def end_to_end_check(rng: np.random.Generator, late: str = "mean") -> Check:
    """Full forward + BPR + InfoNCE + L2 on a 6-user / 6-item toy with text."""
    n_u = n_i = 6
    d, d_text = 3, 2
    hg_u = _toy_hypergraph(n_u, rng)
    hg_i = _toy_hypergraph(n_i, rng)
    operators = {"user": propagation_operator(hg_u), "item": propagation_operator(hg_i)}
    bases = {"user": build_basis(hg_u, 1.0, "exact"), "item": build_basis(hg_i, 1.0, "exact")}
    text = {
        "user": TextEmbeddings(rng.standard_normal((n_u, d_text)), "user"),
        "item": TextEmbeddings(rng.standard_normal((n_i, d_text)), "item"),
    }
    layout = ModelLayout(dim=d, hdnn_layers=2, wavelet_layers=2, late=late)
    params = init_params(n_u, n_i, d, d_text, int(rng.integers(1 << 31)), layout)
    for name in params:
        if name.endswith((".b1", ".b2", ".bias")) or name == "fusion.late_logit":
            params[name] = params[name] + 0.1 * rng.standard_normal(params[name].shape)
    users = np.array([0, 1, 3, 5])
    pos = np.array([1, 2, 0, 4])
    neg = np.array([3, 5, 2, 0])
    cfg = TrainConfig(ssl_weight=0.3, reg_weight=0.01, temperature=0.5)

    def fn(t, v):
        fused = forward_full(v, layout, operators, bases, text)
        u = T.gather_rows(fused.users, users)
        b = bpr_loss(
            T.row_dot(u, T.gather_rows(fused.items, pos)),
            T.row_dot(u, T.gather_rows(fused.items, neg)),
        )
        ssl_u = infonce_cross_view([z for z, _ in fused.user_pairs], [g for _, g in fused.user_pairs], cfg.temperature)
        ssl_i = infonce_cross_view([z for z, _ in fused.item_pairs], [g for _, g in fused.item_pairs], cfg.temperature)
        return total_loss(b, ssl_u, ssl_i, [v["struct.users"], v["struct.items"]], cfg)

    return fn, params


class DiagnosticsService:
    def run_gradcheck(self, seed: int = 0, eps: float = 1e-5, tolerance: float = TOLERANCE) -> list[GradCheckRow]:
        """One row per op and composite, with its max relative error."""
        rng = np.random.default_rng(seed)
        checks: dict[str, Check] = {}
        checks.update(op_checks(rng))
        checks.update(component_checks(rng))
        checks["end_to_end[mean]"] = end_to_end_check(rng, "mean")
        checks["end_to_end[learned_scalar]"] = end_to_end_check(rng, "learned_scalar")

        rows = []
        for name, (fn, leaves) in checks.items():
            err = grad_check(fn, leaves, eps)
            passed = bool(np.isfinite(err) and err < tolerance)
            rows.append(GradCheckRow(component=name, max_rel_error=float(err), passed=passed))
            (_log.debug if passed else _log.warning)("gradcheck", component=name, max_rel_error=err)
        return rows


# Global diagnostics service instance
diagnostics_service = DiagnosticsService()
