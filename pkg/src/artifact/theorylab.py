"""Numerical check of the subset-gradient approximation bound on convex problems.

For a convex sum-of-losses objective ``L(theta) = sum_i L_i(theta)`` and a
projected gradient method that steps along the *subset* sum
``g_t = sum_{i in S_t} grad L_i(theta_t)`` with ``lr = d / (sigma sqrt(T))``::

    min_t L(theta_t) - L(theta*) <= d sigma / sqrt(T) + (d / T) sum_t Err_t
    Err_t = || g_t - grad L(theta_t) ||

where ``sigma`` bounds ``||grad L||`` (and any subset sum) on the feasible
ball and ``d`` bounds ``||theta - theta*||``. Iterates and the comparator
both live in the ball of radius ``d/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import decanter as dc
from .numerics import ContractError, RngStream, project_to_ball, spectral_norm_upper_bound

FAMILIES = ("quadratic", "logistic")
POLICIES = ("full", "random_k", "diet_static", "decant_dynamic")


class OracleError(RuntimeError):
    """The reference optimiser failed to reach its tolerance."""


@dataclass
class TheoremInstance:
    family: str
    features: np.ndarray  # quadratic: (n, rows, dim) blocks A_i; logistic: (n, dim) points x_i
    targets: np.ndarray  # quadratic: (n, rows) b_i; logistic: (n,) labels in {-1, +1}
    radius: float  # d
    sigma: float  # Lipschitz bound sigma_T
    horizon: int  # T
    theta_star: np.ndarray
    loss_star: float
    theta0: np.ndarray
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.targets)

    @property
    def dim(self) -> int:
        return self.theta_star.shape[0]

    @property
    def lr(self) -> float:
        return self.radius / (self.sigma * math.sqrt(self.horizon))

    def per_sample_grads(self, theta: np.ndarray) -> np.ndarray:
        return per_sample_grads(self.family, self.features, self.targets, theta)

    def loss(self, theta: np.ndarray) -> float:
        return total_loss(self.family, self.features, self.targets, theta)


def per_sample_grads(family, feats, targets, theta) -> np.ndarray:
    if family == "quadratic":
        resid = np.einsum("nrd,d->nr", feats, theta) - targets
        return np.einsum("nrd,nr->nd", feats, resid)
    margin = targets * (feats @ theta)
    # d/dtheta log(1 + exp(-m)) = -sigmoid(-m) * y * x
    coef = -targets * _sigmoid(-margin)
    return coef[:, None] * feats


def total_loss(family, feats, targets, theta) -> float:
    if family == "quadratic":
        resid = np.einsum("nrd,d->nr", feats, theta) - targets
        return float(0.5 * np.sum(resid * resid))
    margin = targets * (feats @ theta)
    return float(np.sum(np.logaddexp(0.0, -margin)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _smoothness(family, feats) -> float:
    if family == "quadratic":
        h = np.einsum("nrd,nre->de", feats, feats)
        return float(np.linalg.eigvalsh(h)[-1])
    return float(np.sum(feats * feats) / 4.0)


def solve_reference(family, feats, targets, radius, tol=1e-10, max_iter=500_000) -> np.ndarray:
    """Projected accelerated gradient descent on the full objective.

    Stops when the projected-gradient step ``||theta - P(theta - g/L)|| * L``
    drops below ``tol``. Restarts momentum whenever the objective rises.
    """
    dim = feats.shape[-1]
    lip = max(_smoothness(family, feats), 1e-12)
    x = np.zeros(dim)
    y = x.copy()
    tk = 1.0
    f_prev = total_loss(family, feats, targets, x)
    for _ in range(max_iter):
        g = per_sample_grads(family, feats, targets, y).sum(axis=0)
        x_new = project_to_ball(y - g / lip, radius)
        f_new = total_loss(family, feats, targets, x_new)
        if f_new > f_prev and tk > 1.0:  # adaptive restart
            tk = 1.0
            y = x.copy()
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = x_new + ((tk - 1.0) / t_new) * (x_new - x)
        x, tk, f_prev = x_new, t_new, f_new
        gx = per_sample_grads(family, feats, targets, x).sum(axis=0)
        mapping = np.linalg.norm(x - project_to_ball(x - gx / lip, radius)) * lip
        if mapping <= tol:
            return x
    raise OracleError(f"reference solver did not reach tolerance {tol}")


def _lipschitz_bound(family, feats, targets, ball: float) -> float:
    """Sum over samples of the largest per-sample gradient norm on ``||theta|| <= ball``."""
    total = 0.0
    if family == "quadratic":
        for a, b in zip(feats, targets):
            total += spectral_norm_upper_bound(a.T @ a) * ball + float(np.linalg.norm(a.T @ b))
        return total
    norms = np.linalg.norm(feats, axis=1)
    # |sigmoid(-m)| <= sigmoid(||x|| * ball) when |m| <= ||x|| * ball
    return float(np.sum(norms * _sigmoid(norms * ball)))


def build_instance(
    family: str,
    n: int,
    dim: int,
    seed: int,
    radius: float,
    horizon: int = 200,
    rows: int = 1,
    noise: float = 0.5,
    features: Optional[np.ndarray] = None,
    targets: Optional[np.ndarray] = None,
) -> TheoremInstance:
    """Random convex instance with a reference optimum inside the ``radius/2`` ball.

    ``features``/``targets`` may be given explicitly to build hand-made
    instances (quadratic features shaped ``(n, rows, dim)``).
    """
    if family not in FAMILIES:
        raise ContractError(f"family must be one of {FAMILIES}")
    if n < 1 or dim < 1 or not radius > 0 or horizon < 1:
        raise ContractError("need n, dim, horizon >= 1 and radius > 0")
    rng = RngStream(seed, f"theorem/{family}")
    if features is None:
        if family == "quadratic":
            features = rng.normal(0.0, 1.0, size=(n, rows, dim))
            truth = rng.normal(0.0, 1.0, size=dim)
            targets = np.einsum("nrd,d->nr", features, truth) + noise * rng.normal(0.0, 1.0, size=(n, rows))
        else:
            truth = rng.normal(0.0, 1.0, size=dim)
            features = rng.normal(0.0, 1.0, size=(n, dim))
            logits = features @ truth + noise * rng.normal(0.0, 1.0, size=n)
            targets = np.where(logits >= 0, 1.0, -1.0)
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    ball = radius / 2.0
    theta_star = solve_reference(family, features, targets, ball)
    sigma = _lipschitz_bound(family, features, targets, ball)
    start = rng.child("theta0").normal(0.0, 1.0, size=features.shape[-1])
    theta0 = start * (ball / max(np.linalg.norm(start), 1e-300))
    return TheoremInstance(
        family=family,
        features=features,
        targets=targets,
        radius=float(radius),
        sigma=float(sigma),
        horizon=int(horizon),
        theta_star=theta_star,
        loss_star=total_loss(family, features, targets, theta_star),
        theta0=theta0,
        name=f"{family}-n{n}-d{dim}-s{seed}",
    )


@dataclass
class Trajectory:
    thetas: np.ndarray  # (T+1, dim), thetas[0] is the start
    losses: np.ndarray  # (T+1,)
    errs: np.ndarray  # (T,), Err at thetas[0..T-1]
    subset_sizes: np.ndarray  # (T,)
    policy: str = ""


def _policy_subsets(inst: TheoremInstance, policy: str, params: dict, rng: RngStream):
    """Coroutine: receives the per-sample grads at step ``t`` and yields that step's subset."""
    n, T = inst.n, inst.horizon
    all_ids = np.arange(n)
    grads = yield
    if policy == "full":
        while True:
            grads = yield all_ids
    elif policy == "random_k":
        k = int(params.get("k", max(1, n // 2)))
        if not 1 <= k <= n:
            raise ContractError(f"random_k needs 1 <= k <= n, got {k}")
        t = 0
        while True:
            ids = all_ids if k == n else np.sort(rng.child(t).choice(n, size=k, replace=False))
            grads = yield ids
            t += 1
    elif policy == "diet_static":
        pick = int(params.get("pick_step", max(1, T // 10)))
        k = int(params.get("k", max(1, n // 2)))
        for _ in range(pick):
            grads = yield all_ids
        norms = np.linalg.norm(grads, axis=1)
        fixed = np.sort(dc.rank_order(all_ids, norms)[:k])
        while True:
            yield fixed
    elif policy == "decant_dynamic":
        eps = float(params.get("epsilon", 0.1))
        sched = dc.SubsetSchedule(n, T, int(params.get("min_size", max(1, math.ceil(0.05 * n)))))
        state = dc.initial_state(all_ids, eps, sched)
        t = 0
        while True:
            if t > 0:
                norms = np.linalg.norm(grads[state.active], axis=1)
                state = dc.decant_update(state, dc.rank_order(state.active, norms), rng.child(t))
            grads = yield state.active
            t += 1
    elif policy == "adversarial":
        while True:
            full = grads.sum(axis=0)
            cos = grads @ full / (np.linalg.norm(grads, axis=1) * np.linalg.norm(full) + 1e-300)
            grads = yield np.array([int(np.argmin(cos))])
    else:
        raise ContractError(f"unknown policy {policy!r}")


def run_policy(inst: TheoremInstance, policy: str, params: Optional[dict] = None, seed: int = 0) -> Trajectory:
    """Projected descent along the unscaled subset-gradient sum chosen by ``policy``.

    Subsets are chosen from the per-sample gradients at the current
    iterate. ``adversarial`` always picks the single sample whose gradient
    is worst aligned with the full gradient.
    """
    params = params or {}
    if policy not in POLICIES + ("adversarial",):
        raise ContractError(f"unknown policy {policy!r}")
    rng = RngStream(seed, f"policy/{policy}")
    lr = inst.lr
    ball = inst.radius / 2.0
    theta = inst.theta0.copy()
    thetas = [theta.copy()]
    errs, sizes = [], []
    chooser = _policy_subsets(inst, policy, params, rng)
    next(chooser)
    for _ in range(inst.horizon):
        grads = inst.per_sample_grads(theta)
        subset = chooser.send(grads)
        full = grads.sum(axis=0)
        step = full if len(subset) == inst.n else grads[subset].sum(axis=0)
        errs.append(float(np.linalg.norm(step - full)))
        sizes.append(len(subset))
        theta = project_to_ball(theta - lr * step, ball)
        thetas.append(theta.copy())
    thetas = np.array(thetas)
    losses = np.array([inst.loss(th) for th in thetas])
    return Trajectory(thetas, losses, np.array(errs), np.array(sizes), policy)


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    errs: np.ndarray
    holds: bool
    mean_err: float = field(default=0.0)


def check_bound(inst: TheoremInstance, traj: Trajectory) -> BoundReport:
    """``lhs = min_{t=1..T} L(theta_t) - L*``; ``rhs`` sums Err over steps ``0..T-1``."""
    T = inst.horizon
    lhs = float(np.min(traj.losses[1:T + 1]) - inst.loss_star)
    rhs = inst.radius * inst.sigma / math.sqrt(T) + (inst.radius / T) * float(np.sum(traj.errs[:T]))
    return BoundReport(lhs, rhs, traj.errs, bool(lhs <= rhs + 1e-9), float(np.mean(traj.errs)))


def run_suite(instances: int = 100, seeds=(0, 1, 2), policies=POLICIES, horizon: int = 200, base_seed: int = 0):
    """Random instances x policies x seeds. Yields one row dict per run."""
    for k in range(instances):
        gen = RngStream(base_seed, "suite").child(k)
        family = FAMILIES[k % 2]
        n = int(gen.integers(10, 41))
        dim = int(gen.integers(2, 7))
        radius = float(gen.uniform(1.0, 10.0))
        inst = build_instance(family, n, dim, seed=base_seed * 100_003 + k, radius=radius, horizon=horizon)
        for policy in policies:
            for s in seeds:
                traj = run_policy(inst, policy, {}, seed=s)
                rep = check_bound(inst, traj)
                yield {
                    "instance": k,
                    "family": family,
                    "policy": policy,
                    "seed": s,
                    "lhs": rep.lhs,
                    "rhs": rep.rhs,
                    "holds": rep.holds,
                    "mean_err": rep.mean_err,
                    "max_err": float(np.max(traj.errs)),
                }
