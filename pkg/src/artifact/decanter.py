"""Data-side dynamic sparsity.

Contrastive loss, per-sample view-difference scores, ranking, the cosine
subset-size schedule and the recycle-bin update that decides which
training samples are used in the next epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .numerics import ContractError, RngStream, cosine_anneal

DENOMINATORS = ("negatives_only", "include_positive")


def _infonce_core(z1, z2, denominator, temperature):
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    n = z1.shape[0]
    if n < 2 or z2.shape != z1.shape:
        raise ContractError("InfoNCE needs two aligned views with at least 2 rows")
    if denominator not in DENOMINATORS:
        raise ContractError(f"unknown InfoNCE denominator {denominator!r}")
    s = (z1 @ z2.T) / temperature
    logits = s.copy()
    if denominator == "negatives_only":
        np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - row_max)
    denom = e.sum(axis=1, keepdims=True)
    lse = (np.log(denom) + row_max)[:, 0]
    per = lse - np.diag(s)
    return z1, z2, per, e / denom


def infonce_loss(z1, z2, denominator: str = "negatives_only", temperature: float = 1.0):
    """Return ``(mean loss, per-sample losses)``.

    With ``negatives_only`` the positive pair is excluded from the
    denominator, so per-sample losses can be negative.
    """
    _, _, per, _ = _infonce_core(z1, z2, denominator, temperature)
    return float(per.mean()), per


def infonce_loss_and_grad(z1, z2, denominator: str = "negatives_only", temperature: float = 1.0):
    """Loss plus gradients of the mean loss with respect to both views."""
    z1, z2, per, p = _infonce_core(z1, z2, denominator, temperature)
    n = z1.shape[0]
    g = p.copy()
    g[np.diag_indices(n)] -= 1.0
    g /= n * temperature
    return float(per.mean()), per, g @ z2, g.T @ z1


@dataclass
class ViewPredictions:
    first: np.ndarray
    second: np.ndarray


@dataclass
class ScoredSample:
    sample_id: int
    raw: float
    normalized: float = 0.0


def sample_score(vp: ViewPredictions) -> float:
    return float(np.linalg.norm(np.asarray(vp.first) - np.asarray(vp.second)))


def view_scores(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """Row-wise ``||p' - p''||``."""
    return np.sqrt(np.sum((z1 - z2) ** 2, axis=1))


def normalize_scores(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.full(raw.shape, 0.5)
    return (raw - lo) / (hi - lo)


def rank_order(ids: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Ids sorted by raw score descending, ties by ascending id."""
    ids = np.asarray(ids)
    return ids[np.lexsort((ids, -np.asarray(raw)))]


def normalize_and_rank(scores: Sequence[ScoredSample]) -> list:
    if not scores:
        raise ContractError("nothing to rank")
    raw = np.array([s.raw for s in scores])
    norm = normalize_scores(raw)
    out = [ScoredSample(s.sample_id, s.raw, float(v)) for s, v in zip(scores, norm)]
    out.sort(key=lambda s: (-s.raw, s.sample_id))
    return out


@dataclass(frozen=True)
class SubsetSchedule:
    initial: int  # M(0)
    horizon: int  # T
    minimum: int = 0  # M_min

    def __post_init__(self):
        if self.initial < 1 or self.horizon < 1 or self.minimum < 0:
            raise ContractError("invalid subset schedule")


def default_min_size(initial: int) -> int:
    return min(initial, max(8, math.ceil(0.05 * initial)))


def subset_size_raw(sched: SubsetSchedule, t: int) -> float:
    """Unrounded, unfloored ``M(0)/2 * (1 + cos(pi t / T))``."""
    if not 1 <= t <= sched.horizon:
        raise ContractError(f"step {t} outside [1, {sched.horizon}]")
    return cosine_anneal(sched.initial, t, sched.horizon)


def subset_size_at(sched: SubsetSchedule, t: int) -> int:
    """``max(M_min, round(M(0)/2 * (1 + cos(pi t / T))))`` for ``t`` in ``[1, T]``."""
    return max(sched.minimum, int(round(subset_size_raw(sched, t))))


@dataclass
class DecanterState:
    full: np.ndarray
    active: np.ndarray
    recycle_bin: np.ndarray
    epsilon: float
    schedule: SubsetSchedule
    epoch: int = 1

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ContractError("exploration rate must lie in [0, 1)")

    @property
    def size(self) -> int:
        return len(self.active)

    def check(self) -> None:
        """Assert the partition law."""
        a, b = set(self.active.tolist()), set(self.recycle_bin.tolist())
        if a & b or a | b != set(self.full.tolist()) or len(a) != len(self.active):
            raise AssertionError("active set and recycle bin do not partition the training set")


def initial_state(ids, epsilon: float, schedule: SubsetSchedule) -> DecanterState:
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    return DecanterState(ids, ids.copy(), np.zeros(0, dtype=np.int64), epsilon, schedule, 1)


def decant_update(state: DecanterState, ranked, rng: RngStream, next_size: Optional[int] = None) -> DecanterState:
    """Move to epoch ``t+1``: keep the top of the ranked actives, recycle some from the bin.

    ``next_size`` defaults to ``subset_size_at(schedule, t+1)``. The bin
    supplies ``floor(eps * M(t+1))`` uniform draws (fewer if it is short);
    the remaining slots go to the highest-ranked actives.
    """
    ranked = np.asarray(ranked, dtype=np.int64)
    if len(ranked) != state.size:
        raise ContractError(f"ranked list has {len(ranked)} ids, active set has {state.size}")
    m = subset_size_at(state.schedule, state.epoch + 1) if next_size is None else int(next_size)
    if m > len(state.full):
        raise ContractError(f"subset size {m} exceeds training set size {len(state.full)}")
    n_recycle = min(int(math.floor(state.epsilon * m + 1e-12)), len(state.recycle_bin))
    n_keep = min(m - n_recycle, len(ranked))
    n_recycle = m - n_keep
    kept = ranked[:n_keep]
    if n_recycle:
        pick = rng.choice(len(state.recycle_bin), size=n_recycle, replace=False)
        drawn = state.recycle_bin[np.sort(pick)]
    else:
        drawn = np.zeros(0, dtype=np.int64)
    active = np.sort(np.concatenate([kept, drawn]))
    new_bin = np.setdiff1d(state.full, active)
    return replace(state, active=active, recycle_bin=new_bin, epoch=state.epoch + 1)
