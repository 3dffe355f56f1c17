"""Graph network surrogate: encode, M shared-weight message-passing steps, decode.

Node features are the field values plus a two-channel interior/boundary
one-hot. Messages flow along directed edges (receiver, sender); aggregation
is an exact segment sum over the canonically sorted edge list, so results are
deterministic. The same message/update weights are applied at every step,
which keeps the parameter count independent of the step count.

Time-stepping surrogates add the decoded update to the input field and clamp
the update to zero on boundary nodes; steady-state surrogates decode the
solution directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GraphTopology
from .nn import MlpParams, init_mlp, load_arrays, mlp_backward, mlp_forward, save_arrays

LATENT_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class GnnConfig:
    """Architecture knobs: latent width, message-passing depth, field channels."""

    latent_dim: int
    mp_steps: int
    n_dof: int = 1
    hidden: int | None = None
    residual: bool = True

    def __post_init__(self):
        if self.latent_dim < 1 or self.n_dof < 1:
            raise ValueError("latent_dim and n_dof must be >= 1")
        if self.mp_steps < 0:
            # zero steps is legal: encoder feeds the decoder directly
            raise ValueError("mp_steps must be >= 0")
        if self.latent_dim <= self.n_dof:
            raise ValueError("latent_dim must exceed n_dof")
        if self.hidden is not None and self.hidden < 1:
            raise ValueError("hidden width must be >= 1")

    @property
    def hidden_dim(self) -> int:
        return self.latent_dim if self.hidden is None else self.hidden

    @property
    def n_input(self) -> int:
        # field channels + (interior, boundary) one-hot
        return self.n_dof + 2


@dataclass
class GnnParams:
    """The four MLPs: node encoder, edge message, node update, decoder."""

    encoder: MlpParams
    message: MlpParams
    update: MlpParams
    decoder: MlpParams

    def flat(self) -> list[np.ndarray]:
        return self.encoder.flat() + self.message.flat() + self.update.flat() + self.decoder.flat()

    def param_count(self) -> int:
        return sum(p.param_count() for p in (self.encoder, self.message, self.update, self.decoder))

    @property
    def dtype(self) -> np.dtype:
        return self.encoder.dtype


def init_gnn(cfg: GnnConfig, rng: np.random.Generator, dtype=np.float64) -> GnnParams:
    """Fresh parameters: two ReLU hidden layers per MLP, He-uniform weights.

    Draw order is fixed (encoder, message, update, decoder), so a given seed
    always produces the same parameters regardless of mp_steps.
    """
    d, h = cfg.latent_dim, cfg.hidden_dim
    return GnnParams(
        encoder=init_mlp((cfg.n_input, h, h, d), rng, dtype),
        message=init_mlp((2 * d, h, h, d), rng, dtype),
        update=init_mlp((2 * d, h, h, d), rng, dtype),
        decoder=init_mlp((d, h, h, cfg.n_dof), rng, dtype),
    )


def aggregate_by_receiver(topo: GraphTopology, edge_vals: np.ndarray) -> np.ndarray:
    """Sum edge rows into their receiving node; shape (n_nodes, d)."""
    if topo.degrees.min() == 0:
        out = np.zeros((topo.node_count, edge_vals.shape[1]), dtype=edge_vals.dtype)
        np.add.at(out, topo.edges[:, 0], edge_vals)
        return out
    return np.add.reduceat(edge_vals, topo.recv_starts[:-1], axis=0)


def aggregate_by_sender(topo: GraphTopology, edge_vals: np.ndarray) -> np.ndarray:
    """Sum edge rows into their sending node via the reverse-edge permutation."""
    return aggregate_by_receiver(topo, edge_vals[topo.reverse_edge])


@dataclass
class GnnCache:
    encoder: list
    steps: list
    decoder: list


def node_features(u: np.ndarray, mask_onehot: np.ndarray) -> np.ndarray:
    """Stack field channels with the interior/boundary one-hot columns."""
    u = u if u.ndim == 2 else u[:, None]
    return np.concatenate([u, mask_onehot.astype(u.dtype)], axis=1)


def gnn_forward(
    params: GnnParams,
    topo: GraphTopology,
    features: np.ndarray,
    cfg: GnnConfig,
    collect_latents: bool = False,
):
    """Raw network pass. Returns (decoded output, cache, latent list or None).

    The latent list holds the node embeddings after 0..M message-passing
    steps when requested.
    """
    if features.shape != (topo.node_count, cfg.n_input):
        raise ValueError(
            f"features shape {features.shape} != ({topo.node_count}, {cfg.n_input})"
        )
    xi, enc_cache = mlp_forward(params.encoder, features)
    latents = [xi] if collect_latents else None
    recv, send = topo.edges[:, 0], topo.edges[:, 1]
    step_caches = []
    for _ in range(cfg.mp_steps):
        edge_in = np.concatenate([xi[recv], xi[send]], axis=1)
        msg, msg_cache = mlp_forward(params.message, edge_in)
        agg = aggregate_by_receiver(topo, msg)
        upd_in = np.concatenate([xi, agg], axis=1)
        xi, upd_cache = mlp_forward(params.update, upd_in)
        step_caches.append((msg_cache, upd_cache))
        if collect_latents:
            latents.append(xi)
    y, dec_cache = mlp_forward(params.decoder, xi)
    return y, GnnCache(enc_cache, step_caches, dec_cache), latents


def _accumulate(total: MlpParams | None, part: MlpParams) -> MlpParams:
    if total is None:
        return part
    for tw, pw in zip(total.weights, part.weights):
        tw += pw
    for tb, pb in zip(total.biases, part.biases):
        tb += pb
    return total


def gnn_backward(
    params: GnnParams,
    topo: GraphTopology,
    cache: GnnCache,
    grad_y: np.ndarray,
    cfg: GnnConfig,
) -> tuple[np.ndarray, GnnParams]:
    """Backprop through the cached forward pass.

    Shared message/update weights mean their gradients accumulate across the
    unrolled steps. Returns (grad wrt features, grads shaped like params).
    """
    d = cfg.latent_dim
    grad_xi, dec_grads = mlp_backward(params.decoder, cache.decoder, grad_y)
    msg_total: MlpParams | None = None
    upd_total: MlpParams | None = None
    for msg_cache, upd_cache in reversed(cache.steps):
        g_upd_in, upd_g = mlp_backward(params.update, upd_cache, grad_xi)
        upd_total = _accumulate(upd_total, upd_g)
        grad_agg = g_upd_in[:, d:]
        # each edge's message receives the gradient of its receiver's sum
        g_edge_in, msg_g = mlp_backward(params.message, cache=msg_cache,
                                        grad_out=grad_agg[topo.edges[:, 0]])
        msg_total = _accumulate(msg_total, msg_g)
        grad_xi = (
            g_upd_in[:, :d]
            + aggregate_by_receiver(topo, g_edge_in[:, :d])
            + aggregate_by_sender(topo, g_edge_in[:, d:])
        )
    grad_feat, enc_grads = mlp_backward(params.encoder, cache.encoder, grad_xi)
    return grad_feat, GnnParams(enc_grads, msg_total, upd_total, dec_grads)


def apply_output(u: np.ndarray, y: np.ndarray, is_boundary: np.ndarray, cfg: GnnConfig) -> np.ndarray:
    """Turn the decoded output into the predicted field.

    Residual mode adds y to the input with the boundary rows of y forced to
    zero, so Dirichlet nodes never drift. Direct mode returns y as-is.
    """
    if not cfg.residual:
        return y
    delta = y.copy()
    delta[is_boundary] = 0.0
    return u + delta


def output_grad(grad_pred: np.ndarray, is_boundary: np.ndarray, cfg: GnnConfig) -> np.ndarray:
    """Gradient of apply_output wrt the decoded output y."""
    if not cfg.residual:
        return grad_pred
    g = grad_pred.copy()
    g[is_boundary] = 0.0
    return g


def predict_step(
    params: GnnParams,
    topo: GraphTopology,
    mask_onehot: np.ndarray,
    is_boundary: np.ndarray,
    u: np.ndarray,
    cfg: GnnConfig,
    collect_latents: bool = False,
):
    """One surrogate application u -> u'. Returns (u', latents or None)."""
    feats = node_features(u, mask_onehot)
    y, _, latents = gnn_forward(params, topo, feats, cfg, collect_latents=collect_latents)
    u2 = u if u.ndim == 2 else u[:, None]
    return apply_output(u2, y, is_boundary, cfg), latents


def rollout(
    params: GnnParams,
    topo: GraphTopology,
    mask_onehot: np.ndarray,
    is_boundary: np.ndarray,
    u0: np.ndarray,
    n_steps: int,
    cfg: GnnConfig,
) -> np.ndarray:
    """Iterate predict_step from u0; returns (n_steps + 1, n_nodes, n_dof)."""
    u = u0 if u0.ndim == 2 else u0[:, None]
    out = np.empty((n_steps + 1,) + u.shape, dtype=u.dtype)
    out[0] = u
    for k in range(n_steps):
        u, _ = predict_step(params, topo, mask_onehot, is_boundary, u, cfg)
        out[k + 1] = u
    return out


def replicate_topology(topo: GraphTopology, copies: int) -> GraphTopology:
    """Block-diagonal union of `copies` disjoint copies of a graph.

    Stacking per-graph node rows in order turns a batch of identical graphs
    into one big graph, so batched forward/backward passes reuse the same
    segment-sum code path.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if copies == 1:
        return topo
    n = topo.node_count
    offsets = (np.arange(copies) * n)[:, None, None]
    edges = (topo.edges[None, :, :] + offsets).reshape(-1, 2)
    return GraphTopology(node_count=copies * n, edges=edges, require_connected=False)


def latent_norm_map(latents: list[np.ndarray]) -> np.ndarray:
    """Per-node latent norms relative to the encoder output.

    Row m holds ||xi_i^m|| / (||xi_i^0|| + 1e-12); row 0 is exactly 1 away
    from degenerate zero-latent nodes.
    """
    norms = np.stack([np.linalg.norm(x, axis=1) for x in latents])
    return norms / (norms[0] + LATENT_NORM_FLOOR)


_MLP_NAMES = ("encoder", "message", "update", "decoder")


def params_to_arrays(params: GnnParams) -> dict[str, np.ndarray]:
    out = {}
    for name in _MLP_NAMES:
        mlp: MlpParams = getattr(params, name)
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            out[f"{name}/w{i}"] = w
            out[f"{name}/b{i}"] = b
    return out


def params_from_arrays(arrays: dict[str, np.ndarray]) -> GnnParams:
    mlps = {}
    for name in _MLP_NAMES:
        weights, biases = [], []
        i = 0
        while f"{name}/w{i}" in arrays:
            weights.append(arrays[f"{name}/w{i}"])
            biases.append(arrays[f"{name}/b{i}"])
            i += 1
        if not weights:
            raise ValueError(f"checkpoint is missing the {name} layers")
        mlps[name] = MlpParams(weights=weights, biases=biases)
    return GnnParams(**mlps)


def save_model(path, params: GnnParams, cfg: GnnConfig,
               extra_arrays: dict[str, np.ndarray] | None = None,
               extra_meta: dict[str, str] | None = None) -> None:
    """One-file checkpoint: architecture header, weights, caller extras."""
    meta = {
        "format": "gnn-checkpoint",
        "latent_dim": str(cfg.latent_dim),
        "mp_steps": str(cfg.mp_steps),
        "n_dof": str(cfg.n_dof),
        "hidden": "default" if cfg.hidden is None else str(cfg.hidden),
        "mode": "residual" if cfg.residual else "direct",
        "param_count": str(params.param_count()),
    }
    for key, value in (extra_meta or {}).items():
        if key in meta:
            raise ValueError(f"extra_meta may not override reserved key {key!r}")
        meta[key] = str(value)
    arrays = params_to_arrays(params)
    for key, value in (extra_arrays or {}).items():
        if key in arrays:
            raise ValueError(f"extra_arrays may not override weight array {key!r}")
        arrays[key] = value
    save_arrays(path, arrays, meta)


def load_model(path) -> tuple[GnnParams, GnnConfig, dict[str, np.ndarray], dict[str, str]]:
    """Inverse of save_model; extras come back in the last two slots."""
    arrays, meta = load_arrays(path)
    if meta.get("format") != "gnn-checkpoint":
        raise ValueError(f"{path}: not a model checkpoint")
    cfg = GnnConfig(
        latent_dim=int(meta["latent_dim"]),
        mp_steps=int(meta["mp_steps"]),
        n_dof=int(meta["n_dof"]),
        hidden=None if meta["hidden"] == "default" else int(meta["hidden"]),
        residual=meta["mode"] == "residual",
    )
    params = params_from_arrays(arrays)
    extras = {
        k: v for k, v in arrays.items()
        if not any(k.startswith(f"{name}/") for name in _MLP_NAMES)
    }
    return params, cfg, extras, meta
