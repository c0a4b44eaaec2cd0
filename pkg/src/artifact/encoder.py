"""Two-layer GCN encoder with a projection layer, mean readout and hand-written backward pass.

Forward, for one graph with normalized adjacency ``A`` and features ``X``::

    H1 = relu(A X  (W1 * M1))
    H2 = relu(A H1 (W2 * M2))
    Z  = rownorm(H2 (Wp * Mp))          # node embeddings
    h  = unit(mean_rows(Z))             # graph embedding

``M*`` are binary keep-masks; there are no biases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graphcore import Graph, GraphDataset
from .numerics import ContractError, RngStream, l2_normalize_rows, l2_normalize_rows_backward

LAYER_NAMES = ("gcn1", "gcn2", "proj")


@dataclass
class EncoderParams:
    weights: list  # [W1 (in x hidden), W2 (hidden x hidden), Wp (hidden x embed)]

    def __post_init__(self):
        if len(self.weights) != 3:
            raise ContractError("encoder has exactly two GCN layers and one projection layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ContractError(f"inconsistent layer dims {a.shape} -> {b.shape}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def embed_dim(self) -> int:
        return self.weights[2].shape[1]

    @property
    def shapes(self) -> list:
        return [w.shape for w in self.weights]

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights])

    def flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    def from_flat(self, flat: np.ndarray) -> "EncoderParams":
        out, pos = [], 0
        for w in self.weights:
            out.append(np.asarray(flat[pos:pos + w.size]).reshape(w.shape))
            pos += w.size
        return EncoderParams(out)


def init_params(in_dim: int, hidden_dim: int = 64, embed_dim: int = 64, rng: Optional[RngStream] = None) -> EncoderParams:
    """Glorot-uniform initialisation drawn from the ``init`` stream."""
    rng = rng or RngStream(0, "init")
    dims = [(in_dim, hidden_dim), (hidden_dim, hidden_dim), (hidden_dim, embed_dim)]
    weights = []
    for fan_in, fan_out in dims:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    return EncoderParams(weights)


def _mask_layers(mask, params: EncoderParams) -> list:
    if mask is None:
        return [np.ones_like(w) for w in params.weights]
    layers = getattr(mask, "layers", mask)
    if len(layers) != 3 or any(m.shape != w.shape for m, w in zip(layers, params.weights)):
        raise ContractError("mask shapes do not match encoder parameters")
    return list(layers)


def normalized_adjacency(g: Graph) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``."""
    a = g.adjacency()
    a[np.diag_indices_from(a)] = 1.0
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


@dataclass
class EncoderOutput:
    node_embeddings: np.ndarray
    graph_embedding: np.ndarray
    cache: Optional[dict] = field(default=None, repr=False)


@dataclass
class EncoderGrads:
    """Gradients with respect to the effective (masked) weights.

    ``dense`` holds values at every position, including masked ones, so
    gradient-based reactivation can rank them; ``masked()`` is what the
    optimizer applies.
    """

    dense: list
    mask: list

    def masked(self) -> list:
        return [g * m for g, m in zip(self.dense, self.mask)]


def forward(g: Graph, params: EncoderParams, mask=None, adjacency: Optional[np.ndarray] = None) -> EncoderOutput:
    if g.feature_dim != params.in_dim:
        raise ContractError(f"feature dim {g.feature_dim} != encoder input dim {params.in_dim}")
    masks = _mask_layers(mask, params)
    w1, w2, wp = (w * m for w, m in zip(params.weights, masks))
    a = normalized_adjacency(g) if adjacency is None else adjacency
    ax = a @ g.features
    p1 = ax @ w1
    h1 = np.maximum(p1, 0.0)
    ah1 = a @ h1
    p2 = ah1 @ w2
    h2 = np.maximum(p2, 0.0)
    zr = h2 @ wp
    z, z_norms = l2_normalize_rows(zr)
    mean = z.mean(axis=0, keepdims=True)
    h, h_norm = l2_normalize_rows(mean)
    cache = dict(a=a, ax=ax, p1=p1, h1=h1, ah1=ah1, p2=p2, h2=h2, z=z, z_norms=z_norms,
                 h=h, h_norm=h_norm, weff=(w1, w2, wp), masks=masks)
    return EncoderOutput(z, h[0], cache)


def backward(out: EncoderOutput, grad_graph=None, grad_nodes=None) -> EncoderGrads:
    """Reverse pass of :func:`forward` given upstream gradients.

    ``grad_graph`` is dL/d(graph embedding); ``grad_nodes`` is
    dL/d(node embeddings). Either may be omitted.
    """
    c = out.cache
    if c is None:
        raise ContractError("encoder output carries no cached activations")
    w1, w2, wp = c["weff"]
    dz = np.zeros_like(c["z"])
    if grad_graph is not None:
        dmean = l2_normalize_rows_backward(np.asarray(grad_graph, dtype=np.float64)[None, :], c["h"], c["h_norm"])
        dz += dmean / c["z"].shape[0]
    if grad_nodes is not None:
        dz += grad_nodes
    dzr = l2_normalize_rows_backward(dz, c["z"], c["z_norms"])
    dwp = c["h2"].T @ dzr
    dp2 = (dzr @ wp.T) * (c["p2"] > 0)
    dw2 = c["ah1"].T @ dp2
    dp1 = (c["a"] @ (dp2 @ w2.T)) * (c["p1"] > 0)
    dw1 = c["ax"].T @ dp1
    return EncoderGrads([dw1, dw2, dwp], c["masks"])


def embed_dataset(ds: GraphDataset, indices, params: EncoderParams, mask=None) -> np.ndarray:
    """Clean-view embeddings, one row per sample unit, in index order."""
    idx = np.asarray(indices, dtype=np.int64)
    if ds.task == "node":
        out = forward(ds.graphs[0], params, mask)
        return out.node_embeddings[idx].copy()
    rows = np.zeros((len(idx), params.embed_dim))
    for r, i in enumerate(idx):
        rows[r] = forward(ds.graphs[i], params, mask).graph_embedding
    return rows
