"""Stochastic node- and edge-dropping views for contrastive training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphcore import Graph
from .numerics import ContractError, RngStream

KINDS = ("node-drop", "edge-drop", "compose")


@dataclass(frozen=True)
class AugmentSpec:
    node_drop_ratio: float = 0.25
    edge_drop_ratio: float = 0.25
    kind: str = "compose"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"augmentation kind must be one of {KINDS}, got {self.kind!r}")
        for r in (self.node_drop_ratio, self.edge_drop_ratio):
            if not 0.0 <= r < 1.0:
                raise ContractError(f"drop ratio must lie in [0, 1), got {r}")


def node_drop_indexed(g: Graph, ratio: float, rng: RngStream):
    """Drop nodes; return the view and the surviving original node ids."""
    n_drop = min(int(np.floor(ratio * g.node_count)), g.node_count - 1)
    if n_drop <= 0:
        return g, np.arange(g.node_count)
    dropped = rng.choice(g.node_count, size=n_drop, replace=False)
    keep_mask = np.ones(g.node_count, dtype=bool)
    keep_mask[dropped] = False
    keep = np.flatnonzero(keep_mask)
    new_id = np.full(g.node_count, -1, dtype=np.int64)
    new_id[keep] = np.arange(len(keep))
    e = g.edges
    if len(e):
        e = e[keep_mask[e[:, 0]] & keep_mask[e[:, 1]]]
        e = new_id[e]
    return Graph(len(keep), e, g.features[keep], g.label), keep


def node_drop(g: Graph, ratio: float, rng: RngStream) -> Graph:
    return node_drop_indexed(g, ratio, rng)[0]


def edge_drop(g: Graph, ratio: float, rng: RngStream) -> Graph:
    n_drop = int(np.floor(ratio * g.edge_count))
    if n_drop <= 0:
        return g
    dropped = rng.choice(g.edge_count, size=n_drop, replace=False)
    keep = np.ones(g.edge_count, dtype=bool)
    keep[dropped] = False
    return Graph(g.node_count, g.edges[keep], g.features, g.label)


def augment_indexed(g: Graph, spec: AugmentSpec, rng: RngStream):
    keep = np.arange(g.node_count)
    if spec.kind in ("node-drop", "compose"):
        g, keep = node_drop_indexed(g, spec.node_drop_ratio, rng)
    if spec.kind in ("edge-drop", "compose"):
        g = edge_drop(g, spec.edge_drop_ratio, rng)
    return g, keep


def make_views_indexed(g: Graph, spec: AugmentSpec, rng: RngStream):
    """Two independent views plus their old-node-id maps.

    Each view draws from its own child of ``rng`` so the pair is
    reproducible whatever order views are consumed in.
    """
    return augment_indexed(g, spec, rng.child(0)), augment_indexed(g, spec, rng.child(1))


def make_views(g: Graph, spec: AugmentSpec, rng: RngStream):
    (v1, _), (v2, _) = make_views_indexed(g, spec, rng)
    return v1, v2
