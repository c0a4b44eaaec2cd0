"""Graph data model, TU-format I/O, synthetic datasets and imbalanced splits."""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .numerics import ContractError, RngStream

DEGREE_CAP = 10


class DatasetFormatError(Exception):
    """A TU-format file could not be parsed."""


@dataclass
class Graph:
    node_count: int
    edges: np.ndarray  # (E, 2) int64, each row (i, j) with i < j, rows sorted
    features: np.ndarray  # (node_count, feature_dim) float64
    label: Optional[int] = None

    def __post_init__(self):
        self.edges = canonical_edges(self.edges, self.node_count)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.node_count:
            raise ContractError(
                f"features shape {self.features.shape} does not match node_count {self.node_count}"
            )

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count))
        if self.edge_count:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        if self.edge_count:
            np.add.at(deg, self.edges.ravel(), 1)
        return deg


def canonical_edges(edges, node_count: int) -> np.ndarray:
    """Sort endpoints, drop self-loops and duplicates, check bounds."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if e.min() < 0 or e.max() >= node_count:
        raise ContractError(f"edge endpoint out of range for {node_count} nodes")
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(e, axis=0)


@dataclass
class GraphDataset:
    graphs: list
    task: str  # "graph" or "node"
    class_count: int
    node_labels: Optional[np.ndarray] = None
    labeled_nodes: Optional[np.ndarray] = None
    name: str = "dataset"

    def __post_init__(self):
        if self.task not in ("graph", "node"):
            raise ContractError(f"unknown task {self.task!r}")
        if self.task == "node":
            if len(self.graphs) != 1:
                raise ContractError("node-level datasets hold exactly one graph")
            self.node_labels = np.asarray(self.node_labels, dtype=np.int64)
            if self.labeled_nodes is None:
                self.labeled_nodes = np.arange(self.graphs[0].node_count)
            self.labeled_nodes = np.asarray(self.labeled_nodes, dtype=np.int64)
        labels = self.labels
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ContractError("labels outside [0, class_count)")

    @property
    def labels(self) -> np.ndarray:
        """Per-unit labels: graph labels, or node labels for node-level tasks."""
        if self.task == "node":
            return self.node_labels
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def unit_count(self) -> int:
        return len(self.graphs) if self.task == "graph" else self.graphs[0].node_count

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim


def degree_one_hot(degrees: np.ndarray, cap: int = DEGREE_CAP) -> np.ndarray:
    feats = np.zeros((len(degrees), cap + 1))
    feats[np.arange(len(degrees)), np.minimum(degrees, cap)] = 1.0
    return feats


def class_counts(ds: GraphDataset, indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    labels = ds.labels[idx] if idx.size else np.zeros(0, dtype=np.int64)
    return np.bincount(labels, minlength=ds.class_count)


def minority_first(counts: np.ndarray, minority_class: int) -> np.ndarray:
    """Reorder a per-class vector so the minority class comes first."""
    order = [minority_class] + [c for c in range(len(counts)) if c != minority_class]
    return np.asarray(counts)[order]


def dataset_fingerprint(ds: GraphDataset) -> str:
    h = hashlib.sha256()
    h.update(f"{ds.task}:{ds.class_count}:{len(ds.graphs)}".encode())
    for g in ds.graphs:
        h.update(np.int64(g.node_count).tobytes())
        h.update(g.edges.tobytes())
        h.update(np.ascontiguousarray(g.features).tobytes())
        h.update(np.int64(-1 if g.label is None else g.label).tobytes())
    if ds.task == "node":
        h.update(ds.node_labels.tobytes())
    return h.hexdigest()


# --------------------------------------------------------------------------
# TU format


def _read_int_lines(path: str, ncols: int) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = [p.strip() for p in text.split(",")]
            if len(parts) != ncols:
                raise DatasetFormatError(f"{os.path.basename(path)}:{lineno}: expected {ncols} values, got {text!r}")
            try:
                rows.append((lineno, [int(p) for p in parts]))
            except ValueError:
                raise DatasetFormatError(f"{os.path.basename(path)}:{lineno}: unparseable line {text!r}") from None
    return rows


def load_tu_dataset(directory: str, name: str, degree_cap: int = DEGREE_CAP) -> GraphDataset:
    """Read ``<name>_A.txt`` / ``_graph_indicator.txt`` / ``_graph_labels.txt``.

    Node labels (``_node_labels.txt``), when present and non-empty, become
    one-hot features; otherwise node degree capped at ``degree_cap`` is
    one-hot encoded. Graph labels are remapped to ``0..C-1`` in ascending
    order of their original values.
    """
    base = os.path.join(directory, name)
    indicator_rows = _read_int_lines(f"{base}_graph_indicator.txt", 1)
    label_rows = _read_int_lines(f"{base}_graph_labels.txt", 1)
    edge_rows = _read_int_lines(f"{base}_A.txt", 2)

    indicator = np.array([r[0] for _, r in indicator_rows], dtype=np.int64)
    n_total = len(indicator)
    n_graphs = len(label_rows)
    # graph ids must appear as contiguous, non-decreasing blocks 1..N
    prev = 1
    for k, (lineno, (gid,)) in enumerate(indicator_rows):
        if k == 0 and gid != 1 or gid < prev or gid > prev + 1 or gid > n_graphs:
            raise DatasetFormatError(f"{name}_graph_indicator.txt:{lineno}: non-contiguous graph id {gid}")
        prev = gid
    if n_total and prev != n_graphs:
        raise DatasetFormatError(f"{name}_graph_indicator.txt: covers {prev} graphs but {n_graphs} labels given")

    node_label_path = f"{base}_node_labels.txt"
    node_tags = None
    if os.path.exists(node_label_path):
        tag_rows = _read_int_lines(node_label_path, 1)
        if tag_rows:
            if len(tag_rows) != n_total:
                raise DatasetFormatError(f"{name}_node_labels.txt: {len(tag_rows)} lines for {n_total} nodes")
            node_tags = np.array([r[0] for _, r in tag_rows], dtype=np.int64)

    starts = np.searchsorted(indicator, np.arange(1, n_graphs + 1))
    ends = np.append(starts[1:], n_total)
    per_graph_edges = [[] for _ in range(n_graphs)]
    for lineno, (i, j) in edge_rows:
        if not (1 <= i <= n_total and 1 <= j <= n_total):
            raise DatasetFormatError(f"{name}_A.txt:{lineno}: dangling node reference ({i}, {j})")
        gi, gj = indicator[i - 1], indicator[j - 1]
        if gi != gj:
            raise DatasetFormatError(f"{name}_A.txt:{lineno}: edge ({i}, {j}) crosses graphs")
        off = starts[gi - 1]
        per_graph_edges[gi - 1].append((i - 1 - off, j - 1 - off))

    raw_labels = np.array([r[0] for _, r in label_rows], dtype=np.int64)
    classes = np.unique(raw_labels)
    remap = {int(v): k for k, v in enumerate(classes)}
    if node_tags is not None:
        tag_values = np.unique(node_tags)
        tag_index = np.searchsorted(tag_values, node_tags)

    graphs = []
    for gidx in range(n_graphs):
        n = int(ends[gidx] - starts[gidx])
        edges = canonical_edges(per_graph_edges[gidx], n) if per_graph_edges[gidx] else np.zeros((0, 2), np.int64)
        if node_tags is not None:
            feats = np.zeros((n, len(tag_values)))
            feats[np.arange(n), tag_index[starts[gidx]:ends[gidx]]] = 1.0
        else:
            deg = np.zeros(n, dtype=np.int64)
            if len(edges):
                np.add.at(deg, edges.ravel(), 1)
            feats = degree_one_hot(deg, degree_cap)
        graphs.append(Graph(n, edges, feats, remap[int(raw_labels[gidx])]))
    return GraphDataset(graphs, "graph", len(classes), name=name)


def write_tu_dataset(ds: GraphDataset, directory: str, name: str, node_labels: bool = False) -> None:
    """Write a graph-level dataset in TU text format.

    Each undirected edge is written in both directions, as in the public
    TU files. With ``node_labels=True`` the argmax of each feature row is
    written to ``_node_labels.txt``.
    """
    if ds.task != "graph":
        raise ContractError("TU writer supports graph-level datasets only")
    os.makedirs(directory, exist_ok=True)
    base = os.path.join(directory, name)
    a_lines, ind_lines, tag_lines = [], [], []
    offset = 0
    for gid, g in enumerate(ds.graphs, start=1):
        for i, j in g.edges:
            a_lines.append(f"{i + 1 + offset}, {j + 1 + offset}\n")
            a_lines.append(f"{j + 1 + offset}, {i + 1 + offset}\n")
        ind_lines.extend(f"{gid}\n" for _ in range(g.node_count))
        if node_labels:
            tag_lines.extend(f"{int(k)}\n" for k in np.argmax(g.features, axis=1))
        offset += g.node_count
    with open(f"{base}_A.txt", "w", newline="\n") as fh:
        fh.writelines(a_lines)
    with open(f"{base}_graph_indicator.txt", "w", newline="\n") as fh:
        fh.writelines(ind_lines)
    with open(f"{base}_graph_labels.txt", "w", newline="\n") as fh:
        fh.writelines(f"{g.label}\n" for g in ds.graphs)
    if node_labels:
        with open(f"{base}_node_labels.txt", "w", newline="\n") as fh:
            fh.writelines(tag_lines)


# --------------------------------------------------------------------------
# synthetic data


def _cycle_edges(n: int) -> list:
    return [(i, (i + 1) % n) for i in range(n)]


def _star_edges(n: int) -> list:
    return [(0, i) for i in range(1, n)]


def generate_synthetic_imbalanced(
    counts: Sequence[int] = (90, 10),
    sizes: tuple = (6, 12),
    noise: float = 0.05,
    seed: int = 0,
    degree_cap: int = DEGREE_CAP,
) -> GraphDataset:
    """Noisy cycles (class 0) and noisy stars (class 1).

    ``sizes`` is an inclusive node-count range; ``noise`` is the probability
    of adding each absent edge. Graph order is shuffled deterministically.
    """
    lo, hi = sizes
    if lo < 3 or hi < lo:
        raise ContractError(f"degenerate size range {sizes}")
    if len(counts) != 2 or min(counts) < 1:
        raise ContractError("need two class counts, each >= 1")
    if not 0.0 <= noise < 1.0:
        raise ContractError("noise probability must lie in [0, 1)")
    rng = RngStream(seed, "synthetic")
    labels = np.repeat([0, 1], counts)
    labels = labels[rng.permutation(len(labels))]
    graphs = []
    for y in labels:
        n = int(rng.integers(lo, hi + 1))
        edges = set(tuple(sorted(e)) for e in (_cycle_edges(n) if y == 0 else _star_edges(n)))
        if noise > 0:
            iu, ju = np.triu_indices(n, k=1)
            hit = rng.uniform(size=len(iu)) < noise
            edges.update(zip(iu[hit].tolist(), ju[hit].tolist()))
        e = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
        g = Graph(n, e, np.zeros((n, 1)), int(y))
        g.features = degree_one_hot(g.degrees(), degree_cap)
        graphs.append(g)
    return GraphDataset(graphs, "graph", 2, name="synthetic")


def generate_synthetic_node_dataset(
    class_sizes: Sequence[int] = (120, 60, 30),
    feature_dim: int = 8,
    p_in: float = 0.08,
    p_out: float = 0.005,
    feature_noise: float = 1.0,
    seed: int = 0,
) -> GraphDataset:
    """Stochastic block model with Gaussian class-mean node features."""
    if min(class_sizes) < 1:
        raise ContractError("class sizes must be >= 1")
    rng = RngStream(seed, "synthetic-node")
    labels = np.repeat(np.arange(len(class_sizes)), class_sizes)
    n = len(labels)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    hit = rng.uniform(size=len(iu)) < prob
    edges = np.stack([iu[hit], ju[hit]], axis=1)
    means = rng.normal(0.0, 1.0, size=(len(class_sizes), feature_dim))
    feats = means[labels] + feature_noise * rng.normal(0.0, 1.0, size=(n, feature_dim))
    g = Graph(n, edges, feats)
    return GraphDataset([g], "node", len(class_sizes), node_labels=labels, name="synthetic-node")


# --------------------------------------------------------------------------
# splits


@dataclass
class SplitSpec:
    """Training composition of an imbalanced split.

    Either ``minority_count``/``majority_count`` (two-class graph-level
    notation, e.g. MUTAG 5:45) or explicit ``train_counts`` per class.
    ``validation_fraction`` is relative to the whole dataset.
    """

    minority_count: Optional[int] = None
    majority_count: Optional[int] = None
    validation_fraction: float = 0.25
    seed: int = 0
    train_counts: Optional[dict] = None
    minority_class: Optional[int] = None


@dataclass
class SplitResult:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    minority_class: int = 0

    def to_dict(self) -> dict:
        return {
            "train": self.train.tolist(),
            "validation": self.validation.tolist(),
            "test": self.test.tolist(),
            "minority_class": int(self.minority_class),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitResult":
        return cls(
            np.asarray(d["train"], dtype=np.int64),
            np.asarray(d["validation"], dtype=np.int64),
            np.asarray(d["test"], dtype=np.int64),
            int(d.get("minority_class", 0)),
        )


def _population_minority(ds: GraphDataset, pool: np.ndarray) -> int:
    counts = np.bincount(ds.labels[pool], minlength=ds.class_count)
    present = [c for c in range(ds.class_count) if counts[c] > 0]
    return min(present, key=lambda c: (counts[c], c))


def _draw_split(ds, pool, per_class: dict, validation_fraction, rng, minority) -> SplitResult:
    labels = ds.labels
    train = []
    for c in sorted(per_class):
        members = pool[labels[pool] == c]
        want = int(per_class[c])
        if want > len(members):
            raise ContractError(f"class {c} has {len(members)} samples, {want} requested for training")
        if want:
            train.append(members[np.sort(rng.permutation(len(members))[:want])])
    train = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    rest = np.setdiff1d(pool, train)
    n_val = min(int(round(validation_fraction * len(pool))), len(rest))
    val = np.sort(rest[rng.permutation(len(rest))[:n_val]])
    test = np.setdiff1d(rest, val)
    return SplitResult(train, val, test, minority)


def make_imbalanced_split(ds: GraphDataset, spec: SplitSpec) -> SplitResult:
    """Sample an imbalanced training set without replacement.

    Draws use the ``split`` stream of ``spec.seed``. Validation is drawn
    uniformly from the remainder; everything left is the test set.
    """
    if not 0.0 <= spec.validation_fraction < 1.0:
        raise ContractError("validation_fraction must lie in [0, 1)")
    pool = np.arange(ds.unit_count) if ds.task == "graph" else ds.labeled_nodes
    rng = RngStream(spec.seed, "split")
    if spec.train_counts is not None:
        per_class = {int(k): int(v) for k, v in spec.train_counts.items()}
        minority = spec.minority_class
        if minority is None:
            minority = min(per_class, key=lambda c: (per_class[c], c))
    else:
        if spec.minority_count is None or spec.majority_count is None:
            raise ContractError("split needs minority/majority counts or train_counts")
        if ds.class_count != 2:
            raise ContractError("minority:majority notation needs a two-class dataset")
        minority = spec.minority_class if spec.minority_class is not None else _population_minority(ds, pool)
        per_class = {minority: spec.minority_count, 1 - minority: spec.majority_count}
    if any(v < 1 for v in per_class.values()):
        raise ContractError("every class present in training needs >= 1 sample")
    return _draw_split(ds, pool, per_class, spec.validation_fraction, rng, minority)


def longtail_counts(class_count: int, base_count: int, ratio: float) -> list:
    if class_count == 1:
        return [int(base_count)]
    return [
        max(1, int(round(base_count * ratio ** (-i / (class_count - 1)))))
        for i in range(class_count)
    ]


def make_longtail_node_split(
    ds: GraphDataset,
    ratio: float,
    base_count: int,
    validation_fraction: float = 0.25,
    seed: int = 0,
) -> SplitResult:
    """Long-tailed per-class training counts for node-level datasets.

    Classes are ranked by global frequency (ties by class id); the i-th
    ranked class gets ``round(base * ratio**(-i/(C-1)))`` training nodes,
    never fewer than one.
    """
    if ds.task != "node":
        raise ContractError("long-tail splits are defined for node-level datasets")
    if ratio < 1:
        raise ContractError(f"imbalance ratio must be >= 1, got {ratio}")
    pool = ds.labeled_nodes
    freq = np.bincount(ds.labels[pool], minlength=ds.class_count)
    order = sorted(range(ds.class_count), key=lambda c: (-freq[c], c))
    counts = longtail_counts(ds.class_count, base_count, ratio)
    per_class = {c: counts[rank] for rank, c in enumerate(order)}
    for c, want in per_class.items():
        if want > freq[c]:
            raise ContractError(f"class {c} has {freq[c]} nodes, base count {base_count} needs {want}")
    rng = RngStream(seed, "split")
    return _draw_split(ds, pool, per_class, validation_fraction, rng, order[-1])
