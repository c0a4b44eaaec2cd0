"""End-to-end training: sparse contrastive learning with per-epoch data decantation.

Each epoch (1) trains on the active subset and collects a score per
sample from the two augmented views, (2) ranks the scored samples,
(3) shrinks the subset with the cosine schedule and refreshes it from the
recycle bin, and (4) recomputes the weight mask for the next epoch.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import decanter as dc
from .augment import AugmentSpec, make_views_indexed
from .encoder import EncoderParams, backward, embed_dataset, forward, init_params, normalized_adjacency
from .evaluation import EvalReport, ProbeConfig, linear_probe
from .graphcore import GraphDataset, SplitResult, class_counts
from .numerics import ContractError, RngStream
from .sparsifier import (
    SparsityMask,
    SparsitySchedule,
    alpha_at,
    full_mask,
    prune_topk,
    random_mask,
    reactivate,
)

SELECTORS = ("graphdec", "vanilla", "random_subset", "data_diet")
TOGGLES = ("gs", "ss", "cad", "rs", "rm", "sg", "cag", "rw", "self_supervision")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.2
    momentum: float = 0.0
    hidden_dim: int = 64
    embed_dim: int = 64
    temperature: float = 0.5
    infonce_denominator: str = "negatives_only"
    # augmentation
    node_drop_ratio: float = 0.25
    edge_drop_ratio: float = 0.25
    augment_kind: str = "compose"
    # model sparsity
    alpha0: float = 0.8
    alpha_min: float = 0.05
    reactivation_interval: int = 5
    # data sparsity
    subset_fraction: float = 1.0
    epsilon: float = 0.1
    min_subset: Optional[int] = None
    warmup_epochs: int = 3
    cad_target_fraction: float = 0.5
    diet_pick_epoch: Optional[int] = None
    diet_keep_fraction: float = 0.5
    selector: str = "graphdec"
    # ablation toggles; all on means full method
    gs: bool = True
    ss: bool = True
    cad: bool = True
    rs: bool = True
    rm: bool = True
    sg: bool = True
    cag: bool = True
    rw: bool = True
    self_supervision: bool = True
    # probe
    probe_epochs: int = 500
    probe_lr: float = 0.5
    probe_l2: float = 1e-3
    probe_balanced: bool = True
    seed: int = 0
    workers: int = 1

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ContractError("batch size must be >= 2 (InfoNCE needs a negative)")
        if self.selector not in SELECTORS:
            raise ContractError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        if not self.lr > 0 or not self.temperature > 0:
            raise ContractError("learning rate and temperature must be positive")
        if not 0 < self.subset_fraction <= 1:
            raise ContractError("subset_fraction must lie in (0, 1]")
        if not 0 < self.diet_keep_fraction <= 1 or not 0 < self.cad_target_fraction <= 1:
            raise ContractError("keep fractions must lie in (0, 1]")
        if self.infonce_denominator not in dc.DENOMINATORS:
            raise ContractError(f"infonce_denominator must be one of {dc.DENOMINATORS}")
        self.augment()
        self.sparsity_schedule()
        return self

    def augment(self) -> AugmentSpec:
        return AugmentSpec(self.node_drop_ratio, self.edge_drop_ratio, self.augment_kind)

    def sparsity_schedule(self) -> SparsitySchedule:
        return SparsitySchedule(self.alpha0, self.epochs, self.reactivation_interval, self.alpha_min)

    def probe(self) -> ProbeConfig:
        return ProbeConfig(self.probe_epochs, self.probe_lr, self.probe_l2, self.probe_balanced)

    def effective(self) -> "TrainConfig":
        """Resolve selector-implied toggles."""
        cfg = self
        if self.selector == "vanilla":
            cfg = replace(cfg, ss=False, sg=False, rw=False)
        elif self.selector == "random_subset":
            cfg = replace(cfg, gs=False)
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EpochTrace:
    epoch: int
    loss: float
    subset_size: int
    keep_fraction: float
    class_counts: list
    seconds: float
    scored: int


@dataclass
class EpochScores:
    """Scores collected in one epoch; ``active`` is the subset trained on."""

    epoch: int
    ids: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray
    active: np.ndarray


@dataclass
class TrainResult:
    params: EncoderParams
    mask: SparsityMask
    traces: list
    scores: list  # EpochScores per epoch
    train_ids: np.ndarray
    diet_subset: Optional[np.ndarray] = None
    masks: list = field(default_factory=list)

    def __iter__(self):
        # allows ``params, mask, traces = train(...)``
        return iter((self.params, self.mask, self.traces))

    def budget(self) -> float:
        """Scored sample-epochs over ``|D_train| * T``."""
        return sum(len(s.ids) for s in self.scores) / (len(self.train_ids) * len(self.scores))


def contrastive_loss_and_grads(views1, views2, params: EncoderParams, mask=None,
                               denominator: str = "negatives_only", temperature: float = 1.0):
    """Mean InfoNCE over paired views and its gradient w.r.t. the effective weights.

    Returns ``(loss, dense_grads)``; ``dense_grads`` covers every position,
    masked or not, exactly as the training loop accumulates them.
    """
    o1 = [forward(g, params, mask) for g in views1]
    o2 = [forward(g, params, mask) for g in views2]
    z1 = np.stack([o.graph_embedding for o in o1])
    z2 = np.stack([o.graph_embedding for o in o2])
    loss, _, dz1, dz2 = dc.infonce_loss_and_grad(z1, z2, denominator, temperature)
    dense = [np.zeros_like(w) for w in params.weights]
    for k in range(len(o1)):
        for g in (backward(o1[k], dz1[k]), backward(o2[k], dz2[k])):
            for layer in range(3):
                dense[layer] += g.dense[layer]
    return loss, dense


def _batches(ids: np.ndarray, batch_size: int) -> list:
    chunks = [ids[i:i + batch_size] for i in range(0, len(ids), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


class _Runner:
    def __init__(self, ds: GraphDataset, split: SplitResult, cfg: TrainConfig):
        self.ds = ds
        self.cfg = cfg.validate().effective()
        self.root = RngStream(cfg.seed, "root")
        self.train_ids = np.sort(np.asarray(split.train, dtype=np.int64))
        if len(self.train_ids) < 2:
            raise ContractError("training split needs at least 2 samples")
        self.labels = ds.labels
        self.params = init_params(ds.feature_dim, cfg.hidden_dim, cfg.embed_dim, RngStream(cfg.seed, "init"))
        self.velocity = [np.zeros_like(w) for w in self.params.weights]
        self.head = RngStream(cfg.seed, "init").child("head").normal(0.0, 0.1, size=(cfg.embed_dim, ds.class_count))
        self.acc_grads = [np.zeros_like(w) for w in self.params.weights]
        self.aug = self.cfg.augment()
        self.sparsity = self.cfg.sparsity_schedule()
        self.pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def _map(self, fn, items):
        if self.pool is None:
            return [fn(x) for x in items]
        return list(self.pool.map(fn, items))  # map preserves input order

    # ---- model mask ------------------------------------------------------
    def mask_for(self, t: int) -> SparsityMask:
        cfg = self.cfg
        if not cfg.sg:
            return full_mask(self.params, t)
        alpha = alpha_at(self.sparsity, t if cfg.cag else self.sparsity.horizon)
        if cfg.rm:
            mask = prune_topk(self.params, alpha, t)
        else:
            mask = random_mask(self.params, alpha, self.root.child("mask", t), t)
        if cfg.rw and t > 1 and t % cfg.reactivation_interval == 0:
            mask = reactivate(self.params, self.acc_grads, alpha, t)
            self.acc_grads = [np.zeros_like(w) for w in self.params.weights]
        return mask

    # ---- loss on a batch of embedding pairs ------------------------------
    def batch_objective(self, z1, z2, ids):
        """Loss, upstream grads for both views, and per-sample scores."""
        cfg = self.cfg
        if cfg.self_supervision:
            loss, _, dz1, dz2 = dc.infonce_loss_and_grad(z1, z2, cfg.infonce_denominator, cfg.temperature)
            return loss, dz1, dz2, dc.view_scores(z1, z2)
        # supervised variant: cross-entropy of a linear head on the first view
        y = self.labels[ids]
        logits = z1 @ self.head
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        onehot = np.eye(self.ds.class_count)[y]
        n = len(ids)
        loss = float(-np.mean(np.log(p[np.arange(n), y] + 1e-300)))
        err = (p - onehot) / n
        dz1 = err @ self.head.T
        self.head -= cfg.lr * (z1.T @ err)
        return loss, dz1, np.zeros_like(z2), np.sqrt(np.sum((p - onehot) ** 2, axis=1))

    def apply_grads(self, dense: list, mask: SparsityMask):
        cfg = self.cfg
        for k, (g, m) in enumerate(zip(dense, mask.layers)):
            self.acc_grads[k] += g
            step = g * m
            if cfg.momentum:
                self.velocity[k] = cfg.momentum * self.velocity[k] + step
                step = self.velocity[k] * m
            self.params.weights[k] -= cfg.lr * step

    # ---- one epoch over a set of units -----------------------------------
    def run_epoch_graph(self, t: int, units: np.ndarray, mask: SparsityMask):
        order = units[self.root.child("batching", t).permutation(len(units))]
        aug_rng = self.root.child("augment", t)
        raw = {}
        losses = []
        for batch in _batches(order, self.cfg.batch_size):

            def fwd(i):
                (v1, _), (v2, _) = make_views_indexed(self.ds.graphs[i], self.aug, aug_rng.child(int(i)))
                return forward(v1, self.params, mask), forward(v2, self.params, mask)

            outs = self._map(fwd, batch)
            z1 = np.stack([o[0].graph_embedding for o in outs])
            z2 = np.stack([o[1].graph_embedding for o in outs])
            loss, dz1, dz2, scores = self.batch_objective(z1, z2, batch)
            grads = self._map(lambda k: (backward(outs[k][0], dz1[k]), backward(outs[k][1], dz2[k])), range(len(batch)))
            dense = [np.zeros_like(w) for w in self.params.weights]
            for g1, g2 in grads:  # fixed summation order
                for layer in range(3):
                    dense[layer] += g1.dense[layer]
                    dense[layer] += g2.dense[layer]
            self.apply_grads(dense, mask)
            losses.append(loss * len(batch))
            raw.update(zip(batch.tolist(), scores.tolist()))
        return raw, float(np.sum(losses) / len(units))

    def run_epoch_node(self, t: int, units: np.ndarray, mask: SparsityMask):
        g = self.ds.graphs[0]
        (v1, keep1), (v2, keep2) = make_views_indexed(g, self.aug, self.root.child("augment", t))
        a1, a2 = normalized_adjacency(v1), normalized_adjacency(v2)
        pos1 = np.full(g.node_count, -1)
        pos1[keep1] = np.arange(len(keep1))
        pos2 = np.full(g.node_count, -1)
        pos2[keep2] = np.arange(len(keep2))
        order = units[self.root.child("batching", t).permutation(len(units))]
        raw, losses = {}, []
        for batch in _batches(order, self.cfg.batch_size):
            o1 = forward(v1, self.params, mask, a1)
            o2 = forward(v2, self.params, mask, a2)
            p1, p2 = pos1[batch], pos2[batch]
            # nodes dropped from a view get a zero embedding there
            z1 = np.where((p1 >= 0)[:, None], o1.node_embeddings[np.maximum(p1, 0)], 0.0)
            z2 = np.where((p2 >= 0)[:, None], o2.node_embeddings[np.maximum(p2, 0)], 0.0)
            loss, dz1, dz2, scores = self.batch_objective(z1, z2, batch)
            up1 = np.zeros_like(o1.node_embeddings)
            up2 = np.zeros_like(o2.node_embeddings)
            np.add.at(up1, p1[p1 >= 0], dz1[p1 >= 0])
            np.add.at(up2, p2[p2 >= 0], dz2[p2 >= 0])
            g1, g2 = backward(o1, grad_nodes=up1), backward(o2, grad_nodes=up2)
            self.apply_grads([x + y for x, y in zip(g1.dense, g2.dense)], mask)
            losses.append(loss * len(batch))
            raw.update(zip(batch.tolist(), scores.tolist()))
        return raw, float(np.sum(losses) / len(units))

    # ---- data subset for the next epoch ----------------------------------
    def next_state(self, state: dc.DecanterState, t: int, ranked: np.ndarray) -> dc.DecanterState:
        cfg = self.cfg
        n = len(self.train_ids)
        if t + 1 <= cfg.warmup_epochs:
            size = n
        elif cfg.cad:
            size = dc.subset_size_at(state.schedule, t + 1 - cfg.warmup_epochs)
        else:
            size = max(state.schedule.minimum, int(round(cfg.cad_target_fraction * state.schedule.initial)))
        if not cfg.gs:
            ranked = ranked[self.root.child("gs", t).permutation(len(ranked))]
        return dc.decant_update(state, ranked, self.root.child("recycle", t), next_size=size)

    def run(self) -> TrainResult:
        cfg, ds = self.cfg, self.ds
        n = len(self.train_ids)
        m0 = max(2, int(round(cfg.subset_fraction * n)))
        data_horizon = max(1, cfg.epochs - cfg.warmup_epochs)
        m_min = cfg.min_subset if cfg.min_subset is not None else dc.default_min_size(m0)
        sched = dc.SubsetSchedule(m0, data_horizon, max(2, min(m_min, m0)))
        epsilon = cfg.epsilon if cfg.rs else 0.0
        state = dc.initial_state(self.train_ids, epsilon, sched)
        pick = cfg.diet_pick_epoch if cfg.diet_pick_epoch is not None else max(1, cfg.epochs // 10)
        diet_subset = None

        traces, records, masks = [], [], []
        mask = self.mask_for(1)
        epoch_fn = self.run_epoch_node if ds.task == "node" else self.run_epoch_graph
        for t in range(1, cfg.epochs + 1):
            start = time.perf_counter()
            if cfg.selector == "data_diet":
                active = diet_subset if diet_subset is not None else self.train_ids
            else:
                active = state.active
            units = active if cfg.ss else self.train_ids
            raw_map, loss = epoch_fn(t, units, mask)
            ids = np.sort(np.fromiter(raw_map.keys(), dtype=np.int64, count=len(raw_map)))
            raw = np.array([raw_map[i] for i in ids.tolist()])
            norm = dc.normalize_scores(raw)
            records.append(EpochScores(t, ids, raw, norm, np.sort(np.asarray(active, dtype=np.int64))))
            masks.append(mask)
            traces.append(EpochTrace(
                epoch=t,
                loss=loss,
                subset_size=len(units),
                keep_fraction=float(mask.keep_fraction),
                class_counts=class_counts(ds, units).tolist(),
                seconds=0.0,
                scored=len(ids),
            ))
            if t < cfg.epochs:
                if cfg.selector == "data_diet":
                    if diet_subset is None and t == pick:
                        k = max(2, int(round(cfg.diet_keep_fraction * n)))
                        diet_subset = np.sort(dc.rank_order(ids, raw)[:k])
                elif cfg.selector != "vanilla":
                    score_of = dict(zip(ids.tolist(), raw.tolist()))
                    act_raw = np.array([score_of[i] for i in state.active.tolist()])
                    state = self.next_state(state, t, dc.rank_order(state.active, act_raw))
                mask = self.mask_for(t + 1)
            traces[-1].seconds = time.perf_counter() - start
        if self.pool is not None:
            self.pool.shutdown()
        return TrainResult(self.params, masks[-1], traces, records, self.train_ids, diet_subset, masks)


def train(ds: GraphDataset, split: SplitResult, cfg: TrainConfig) -> TrainResult:
    """Run the full pipeline; deterministic for a fixed ``cfg.seed``."""
    return _Runner(ds, split, cfg).run()


def select_data_diet(ds: GraphDataset, split: SplitResult, cfg: TrainConfig, pick_epoch: int, keep_fraction: float) -> np.ndarray:
    """Train normally for ``pick_epoch`` epochs, then keep the top-scored fraction for good."""
    if not pick_epoch < cfg.epochs:
        raise ContractError("pick epoch must precede the final epoch")
    n = len(split.train)
    if keep_fraction >= 1.0:
        return np.sort(np.asarray(split.train, dtype=np.int64))
    run_cfg = replace(cfg, selector="data_diet", diet_pick_epoch=pick_epoch,
                      diet_keep_fraction=keep_fraction, epochs=pick_epoch + 1)
    result = train(ds, split, run_cfg)
    return result.diet_subset


def evaluate(ds: GraphDataset, split: SplitResult, result: TrainResult, cfg: TrainConfig):
    """Linear probe on clean-view embeddings of the trained encoder.

    Returns ``(report, eval_set_name)``; falls back to the training set
    when the split leaves no test samples.
    """
    train_ids = np.asarray(split.train)
    test_ids = np.asarray(split.test)
    where = "test"
    if len(test_ids) == 0:
        test_ids, where = train_ids, "train"
    x_tr = embed_dataset(ds, train_ids, result.params, result.mask)
    x_te = embed_dataset(ds, test_ids, result.params, result.mask)
    labels = ds.labels
    report = linear_probe(x_tr, labels[train_ids], x_te, labels[test_ids], ds.class_count, cfg.probe())
    return report, where
