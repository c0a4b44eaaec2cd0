"""Downstream evaluation: a linear probe on frozen embeddings and imbalance-aware metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .numerics import ContractError


@dataclass
class EvalReport:
    accuracy: float
    balanced_accuracy: float
    f1_macro: float
    f1_micro: float
    confusion: list  # rows = true class, cols = predicted class
    per_class_f1: list

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 500
    lr: float = 0.5
    l2: float = 1e-3
    balanced: bool = False  # weight samples by inverse class frequency


def confusion_matrix(preds, labels, class_count: int) -> np.ndarray:
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=np.int64), np.asarray(preds, dtype=np.int64)), 1)
    return cm


def compute_metrics(preds, labels, class_count: int) -> EvalReport:
    """Accuracy, balanced accuracy, macro and micro F1.

    A class with a zero F1 denominator (never predicted, never present)
    scores 0, and so does its recall term when it has no true instances.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.size == 0 or preds.shape != labels.shape:
        raise ContractError("metrics need equal-length, non-empty predictions and labels")
    cm = confusion_matrix(preds, labels, class_count)
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    f1_den = support + predicted
    f1 = np.divide(2.0 * tp, f1_den, out=np.zeros_like(tp), where=f1_den > 0)
    present = support > 0
    accuracy = float(tp.sum() / preds.size)
    # micro F1 = 2*TP / (2*TP + FP + FN) pooled over classes
    fp_fn = (predicted - tp).sum() + (support - tp).sum()
    f1_micro = float(2.0 * tp.sum() / (2.0 * tp.sum() + fp_fn))
    return EvalReport(
        accuracy=accuracy,
        balanced_accuracy=float(recall[present].mean()),
        f1_macro=float(f1.mean()),
        f1_micro=f1_micro,
        confusion=cm.tolist(),
        per_class_f1=f1.tolist(),
    )


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit_probe(x: np.ndarray, y: np.ndarray, class_count: int, cfg: ProbeConfig = ProbeConfig()):
    """Full-batch gradient descent on L2-regularised softmax regression.

    Features are standardised with training statistics (zero-variance
    columns are left centred). With ``balanced`` each class carries equal
    total weight in the loss. Returns a ``predict`` callable.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ContractError("linear probe needs at least two classes in the training labels")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    xs = (x - mu) / sd
    n, d = xs.shape
    w = np.zeros((d, class_count))
    b = np.zeros(class_count)
    onehot = np.eye(class_count)[y]
    if cfg.balanced:
        counts = np.bincount(y, minlength=class_count).astype(np.float64)
        present = int((counts > 0).sum())
        sw = 1.0 / (present * counts[y])
    else:
        sw = np.full(n, 1.0 / n)
    for _ in range(cfg.epochs):
        p = _softmax(xs @ w + b)
        err = (p - onehot) * sw[:, None]
        w -= cfg.lr * (xs.T @ err + cfg.l2 * w)
        b -= cfg.lr * err.sum(axis=0)

    def predict(x_new):
        xn = (np.asarray(x_new, dtype=np.float64) - mu) / sd
        return np.argmax(xn @ w + b, axis=1)

    return predict


def linear_probe(train_x, train_y, test_x, test_y, class_count: int, cfg: ProbeConfig = ProbeConfig()) -> EvalReport:
    train_x = np.asarray(train_x)
    if len(train_x) != len(train_y) or len(test_x) != len(test_y):
        raise ContractError("embedding rows and labels are misaligned")
    predict = fit_probe(train_x, train_y, class_count, cfg)
    return compute_metrics(predict(test_x), test_y, class_count)
