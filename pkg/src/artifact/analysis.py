"""Post-hoc analyses of per-epoch score records: trace matrices, churn, minority sensitivity."""

from __future__ import annotations

import numpy as np

from .numerics import ContractError

SENTINEL = -1.0


def score_trace_matrix(records) -> tuple:
    """Epochs x samples matrix of normalised scores.

    Columns are ordered by rank at the first epoch (raw score descending,
    ties by id; samples unscored then go last in id order). Unscored
    entries hold ``-1``. Returns ``(matrix, sample_ids)``.
    """
    if not records:
        raise ContractError("empty score trace")
    epochs = [r.epoch for r in records]
    if epochs != list(range(epochs[0], epochs[0] + len(epochs))):
        raise ContractError(f"score trace has missing epochs: {epochs}")
    all_ids = np.unique(np.concatenate([r.ids for r in records] + [r.active for r in records]))
    first = records[0]
    ranked = first.ids[np.lexsort((first.ids, -first.raw))]
    rest = np.setdiff1d(all_ids, ranked)
    order = np.concatenate([ranked, rest]).astype(np.int64)
    col = {int(s): k for k, s in enumerate(order)}
    mat = np.full((len(records), len(order)), SENTINEL)
    for row, r in enumerate(records):
        cols = [col[int(i)] for i in r.ids]
        mat[row, cols] = r.normalized
    return mat, order


def top_half(record) -> set:
    order = record.ids[np.lexsort((record.ids, -record.raw))]
    return set(order[: len(order) // 2].tolist())


def bottom_half(record) -> set:
    order = record.ids[np.lexsort((record.ids, -record.raw))]
    return set(order[len(order) // 2:].tolist())


def churn(records, lag: int = 10) -> float:
    """Mean of ``1 - Jaccard(top_half(t), top_half(t + lag))`` over valid ``t``."""
    vals = []
    for a, b in zip(records, records[lag:]):
        ta, tb = top_half(a), top_half(b)
        union = ta | tb
        if union:
            vals.append(1.0 - len(ta & tb) / len(union))
    if not vals:
        raise ContractError(f"trace too short for lag {lag}")
    return float(np.mean(vals))


def rank_risers(records) -> set:
    """Samples in the bottom half at the first epoch that later reach a top half."""
    low = bottom_half(records[0])
    risen = set()
    for r in records[1:]:
        risen |= low & top_half(r)
    return risen


def minority_sensitivity(records, labels, minority_class: int) -> np.ndarray:
    """Per-epoch ``(minority mean, majority mean)`` of normalised scores.

    Means run over samples scored that epoch; a class with no scored
    samples gets ``-1``.
    """
    labels = np.asarray(labels)
    out = np.full((len(records), 2), SENTINEL)
    for row, r in enumerate(records):
        is_min = labels[r.ids] == minority_class
        if is_min.any():
            out[row, 0] = r.normalized[is_min].mean()
        if (~is_min).any():
            out[row, 1] = r.normalized[~is_min].mean()
    return out
