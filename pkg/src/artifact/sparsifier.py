"""Dynamic weight sparsity: magnitude top-k masks, cosine keep-fraction schedule, gradient regrowth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import LAYER_NAMES, EncoderParams
from .numerics import ContractError, RngStream, cosine_anneal


@dataclass
class SparsityMask:
    layers: list  # binary float arrays shaped like the encoder weights
    keep_fraction: float = 1.0
    epoch: int = 0

    def density(self) -> float:
        total = sum(m.size for m in self.layers)
        return float(sum(m.sum() for m in self.layers) / total)

    def to_json(self) -> dict:
        return {
            "epoch": int(self.epoch),
            "keep_fraction": float(self.keep_fraction),
            "layers": {
                name: {"shape": list(m.shape), "active": np.flatnonzero(m.ravel()).tolist()}
                for name, m in zip(LAYER_NAMES, self.layers)
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "SparsityMask":
        layers = []
        for name in LAYER_NAMES:
            spec = d["layers"][name]
            m = np.zeros(int(np.prod(spec["shape"])))
            m[spec["active"]] = 1.0
            layers.append(m.reshape(spec["shape"]))
        return cls(layers, d["keep_fraction"], d["epoch"])


def full_mask(params: EncoderParams, epoch: int = 0) -> SparsityMask:
    return SparsityMask([np.ones_like(w) for w in params.weights], 1.0, epoch)


@dataclass(frozen=True)
class SparsitySchedule:
    alpha0: float = 0.8
    horizon: int = 100
    interval: int = 5
    alpha_min: float = 0.05

    def __post_init__(self):
        if not (0 < self.alpha_min <= self.alpha0 <= 1):
            raise ContractError("need 0 < alpha_min <= alpha0 <= 1")
        if self.interval < 1 or self.horizon < 1:
            raise ContractError("horizon and reactivation interval must be >= 1")


def alpha_at(sched: SparsitySchedule, t: int) -> float:
    """Cosine-annealed keep fraction for epoch ``t`` in ``[1, T]``, floored at ``alpha_min``."""
    if not 1 <= t <= sched.horizon:
        raise ContractError(f"epoch {t} outside [1, {sched.horizon}]")
    return max(sched.alpha_min, cosine_anneal(sched.alpha0, t, sched.horizon))


def keep_count(size: int, alpha: float) -> int:
    # the 1e-9 slack stops float noise (0.8 * 100 = 80.00000000000001) from adding an entry
    return max(1, min(size, math.ceil(alpha * size - 1e-9)))


def _topk_mask(scores: np.ndarray, k: int) -> np.ndarray:
    flat = scores.ravel()
    order = np.argsort(-flat, kind="stable")  # ties keep ascending flat index
    m = np.zeros(flat.size)
    m[order[:k]] = 1.0
    return m.reshape(scores.shape)


def prune_topk(params: EncoderParams, alpha: float, epoch: int = 0) -> SparsityMask:
    if not 0 < alpha <= 1:
        raise ContractError(f"keep fraction must lie in (0, 1], got {alpha}")
    layers = [_topk_mask(np.abs(w), keep_count(w.size, alpha)) for w in params.weights]
    return SparsityMask(layers, alpha, epoch)


def reactivate(params: EncoderParams, grads, alpha: float, epoch: int = 0) -> SparsityMask:
    """Select the active set per layer as the top-k of accumulated |gradient|.

    Stored weights are untouched; a weight that re-enters resumes from the
    value it had when it was pruned.
    """
    if not 0 < alpha <= 1:
        raise ContractError(f"keep fraction must lie in (0, 1], got {alpha}")
    if len(grads) != len(params.weights) or any(g.shape != w.shape for g, w in zip(grads, params.weights)):
        raise ContractError("gradient shapes do not match parameters")
    layers = [_topk_mask(np.abs(g), keep_count(g.size, alpha)) for g in grads]
    return SparsityMask(layers, alpha, epoch)


def random_mask(params: EncoderParams, alpha: float, rng: RngStream, epoch: int = 0) -> SparsityMask:
    """Uniformly random mask with the same per-layer cardinality as :func:`prune_topk`."""
    layers = []
    for w in params.weights:
        m = np.zeros(w.size)
        m[rng.choice(w.size, size=keep_count(w.size, alpha), replace=False)] = 1.0
        layers.append(m.reshape(w.shape))
    return SparsityMask(layers, alpha, epoch)
