"""Dense float64 helpers, named random streams and small optimizer utilities.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np


class ContractError(ValueError):
    """Raised when a caller violates an operation's preconditions."""


def as_matrix(values) -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ContractError("matrix contains non-finite values")
    return m


class RngStream:
    """Counter-based random stream keyed by ``(seed, label)``.

    The Philox key is derived from a hash of the seed and label, so two
    streams with the same pair replay the same draws and distinct labels
    give independent substreams regardless of creation order.
    """

    def __init__(self, seed: int, label: str):
        self.seed = int(seed)
        self.label = str(label)
        digest = hashlib.blake2b(
            f"{self.seed}:{self.label}".encode(), digest_size=16
        ).digest()
        key = np.frombuffer(digest, dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, *parts) -> "RngStream":
        suffix = "/".join(str(p) for p in parts)
        return RngStream(self.seed, f"{self.label}/{suffix}")

    # thin passthroughs; everything else can use .generator directly
    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r})"


@dataclass(frozen=True)
class GradReport:
    max_rel_error: float
    worst_index: tuple
    step: float


def sgd_step(params, grads, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ContractError(f"shape mismatch: params {params.shape} vs grads {grads.shape}")
    if not lr > 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    return params - lr * grads


def project_to_ball(params, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_2 <= radius}``."""
    if not radius > 0:
        raise ContractError(f"radius must be positive, got {radius}")
    params = np.asarray(params, dtype=np.float64)
    norm = float(np.linalg.norm(params))
    if norm <= radius:
        return params.copy()
    return params * (radius / norm)


def finite_diff_check(
    loss_fn: Callable[[np.ndarray], float],
    params,
    analytic_grads,
    step: float = 1e-5,
) -> GradReport:
    """Compare ``analytic_grads`` to central differences of ``loss_fn``.

    ``loss_fn`` receives a flat copy of the parameters. The relative error
    of each coordinate uses ``max(|analytic|, |numeric|, 1e-8)`` as the
    denominator; the worst coordinate is reported as an index tuple into
    ``params``'s shape.
    """
    if not step > 0:
        raise ContractError(f"step must be positive, got {step}")
    params = np.asarray(params, dtype=np.float64)
    analytic = np.asarray(analytic_grads, dtype=np.float64)
    if params.shape != analytic.shape:
        raise ContractError("params and analytic_grads differ in shape")
    flat = params.ravel().copy()
    ana = analytic.ravel()
    worst, worst_i = 0.0, 0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = loss_fn(flat.copy())
        flat[i] = orig - step
        f_minus = loss_fn(flat.copy())
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            idx = np.unravel_index(i, params.shape)
            raise FloatingPointError(f"non-finite loss when perturbing coordinate {idx}")
        numeric = (f_plus - f_minus) / (2.0 * step)
        denom = max(abs(ana[i]), abs(numeric), 1e-8)
        err = abs(ana[i] - numeric) / denom
        if err > worst:
            worst, worst_i = err, i
    return GradReport(float(worst), tuple(int(v) for v in np.unravel_index(worst_i, params.shape)), step)


def spectral_norm_upper_bound(m) -> float:
    """Frobenius norm, which dominates the largest singular value."""
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        raise ContractError("empty matrix")
    scale = float(np.max(np.abs(m)))
    if scale == 0.0:
        return 0.0
    # scaling keeps tiny or huge entries from under/overflowing when squared
    r = m / scale
    return scale * float(np.sqrt(np.sum(r * r)))


_PI_LD = np.arccos(np.longdouble(-1.0))


def cosine_anneal(scale: float, t: int, horizon: int) -> float:
    """``scale/2 * (1 + cos(pi t / T))`` rounded once to float64.

    Evaluated as ``scale * sin(pi (T - t) / (2T))**2`` in long double, which
    avoids the cancellation in ``1 + cos`` near ``t = T``.
    """
    x = _PI_LD * np.longdouble(horizon - t) / np.longdouble(2 * horizon)
    s = np.sin(x)
    return float(np.longdouble(scale) * s * s)


def l2_normalize_rows(x: np.ndarray):
    """Row-wise unit normalisation; zero rows stay zero.

    Returns ``(normalized, norms)`` so callers can backpropagate.
    """
    norms = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe, norms


def l2_normalize_rows_backward(grad_out: np.ndarray, normalized: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d(x/|x|) = (g - y (y.g)) / |x|; zero rows pass no gradient
    dot = np.sum(grad_out * normalized, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    grad_in = (grad_out - normalized * dot) / safe
    return np.where(norms > 0, grad_in, 0.0)
