import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.graphcore import (
    DEGREE_CAP,
    DatasetFormatError,
    Graph,
    SplitResult,
    SplitSpec,
    class_counts,
    dataset_fingerprint,
    generate_synthetic_imbalanced,
    generate_synthetic_node_dataset,
    load_tu_dataset,
    longtail_counts,
    make_imbalanced_split,
    make_longtail_node_split,
    minority_first,
    write_tu_dataset,
)
from artifact.numerics import ContractError

from conftest import MUTAG_DIR, write_fixture


def test_two_graph_fixture(toy_dir):
    ds = load_tu_dataset(toy_dir, "TOY")
    assert [g.node_count for g in ds.graphs] == [3, 2]
    assert ds.labels.tolist() == [1, 0]  # -1 -> 0, 1 -> 1
    assert ds.graphs[0].edges.tolist() == [[0, 1], [1, 2]]
    assert ds.graphs[1].edges.tolist() == [[0, 1]]


def test_degree_features_when_node_labels_empty(tmp_path):
    d = write_fixture(str(tmp_path / "T"), node_labels=[])
    ds = load_tu_dataset(d, "TOY")
    assert ds.feature_dim == DEGREE_CAP + 1
    assert ds.graphs[0].features[1].tolist().index(1.0) == 2  # middle of the path has degree 2


def test_node_label_features(tmp_path):
    d = write_fixture(str(tmp_path / "T"), node_labels=[0, 3, 3, 5, 0])
    ds = load_tu_dataset(d, "TOY")
    assert ds.feature_dim == 3
    assert np.argmax(ds.graphs[0].features, axis=1).tolist() == [0, 1, 1]


def test_duplicate_undirected_edges(tmp_path):
    d = write_fixture(str(tmp_path / "T"), edges=[(1, 2), (2, 1), (2, 3)])
    ds = load_tu_dataset(d, "TOY")
    assert ds.graphs[0].edge_count == 2


@pytest.mark.parametrize("kwargs, needle", [
    (dict(edges=[(1, 9)]), "TOY_A.txt:1"),
    (dict(edges=[(1, 2), (3, 4)]), "TOY_A.txt:2"),
    (dict(indicator=(1, 2, 1, 2, 2)), "graph_indicator.txt:3"),
])
def test_load_errors_carry_line_numbers(tmp_path, kwargs, needle):
    d = write_fixture(str(tmp_path / "T"), **kwargs)
    with pytest.raises(DatasetFormatError, match=needle):
        load_tu_dataset(d, "TOY")


def test_unparseable_line(tmp_path):
    d = write_fixture(str(tmp_path / "T"))
    with open(os.path.join(d, "TOY_A.txt"), "a") as fh:
        fh.write("x, y\n")
    with pytest.raises(DatasetFormatError, match=":4"):
        load_tu_dataset(d, "TOY")


def test_mutag_loads():
    ds = load_tu_dataset(MUTAG_DIR, "MUTAG")
    assert len(ds.graphs) == 188
    assert class_counts(ds, np.arange(188)).tolist() == [63, 125]
    assert ds.feature_dim == 7


def test_round_trip(tmp_path):
    ds = generate_synthetic_imbalanced((12, 4), seed=5)
    write_tu_dataset(ds, str(tmp_path), "R")
    back = load_tu_dataset(str(tmp_path), "R")
    assert [g.node_count for g in back.graphs] == [g.node_count for g in ds.graphs]
    assert all(np.array_equal(a.edges, b.edges) for a, b in zip(ds.graphs, back.graphs))
    assert back.labels.tolist() == ds.labels.tolist()
    assert dataset_fingerprint(back) == dataset_fingerprint(ds)


def test_round_trip_mutag_with_node_labels(tmp_path):
    ds = load_tu_dataset(MUTAG_DIR, "MUTAG")
    write_tu_dataset(ds, str(tmp_path), "M", node_labels=True)
    back = load_tu_dataset(str(tmp_path), "M")
    assert dataset_fingerprint(back) == dataset_fingerprint(ds)


def test_degree_feature_rows_are_one_hot():
    ds = generate_synthetic_imbalanced((30, 10), noise=0.5, seed=2)
    for g in ds.graphs:
        assert np.all(g.features.sum(axis=1) == 1.0)
        assert set(np.unique(g.features)) <= {0.0, 1.0}


def test_synthetic_examples():
    ds = generate_synthetic_imbalanced((90, 10), seed=0)
    assert len(ds.graphs) == 100 and int((ds.labels == 1).sum()) == 10
    exact = generate_synthetic_imbalanced((5, 5), noise=0.0, seed=1)
    for g in exact.graphs:
        if g.label == 0:
            assert np.all(g.degrees() == 2)
        else:
            assert sorted(g.degrees())[-1] == g.node_count - 1
    a = generate_synthetic_imbalanced((20, 5), seed=9)
    b = generate_synthetic_imbalanced((20, 5), seed=9)
    assert all(np.array_equal(x.edges, y.edges) for x, y in zip(a.graphs, b.graphs))
    with pytest.raises(ContractError):
        generate_synthetic_imbalanced((5, 5), sizes=(8, 4))


def test_graph_canonicalizes_edges():
    g = Graph(3, [(2, 1), (1, 2), (0, 0), (0, 2)], np.zeros((3, 1)))
    assert g.edges.tolist() == [[0, 2], [1, 2]]
    with pytest.raises(ContractError):
        Graph(2, [(0, 5)], np.zeros((2, 1)))


def test_mutag_split_5_45():
    ds = load_tu_dataset(MUTAG_DIR, "MUTAG")
    sp = make_imbalanced_split(ds, SplitSpec(5, 45, seed=0))
    counts = class_counts(ds, sp.train)
    assert sp.minority_class == 0
    assert minority_first(counts, sp.minority_class).tolist() == [5, 45]
    again = make_imbalanced_split(ds, SplitSpec(5, 45, seed=0))
    assert sp.to_dict() == again.to_dict()


def test_balanced_split():
    ds = generate_synthetic_imbalanced((30, 30), seed=1)
    sp = make_imbalanced_split(ds, SplitSpec(10, 10, seed=4))
    assert class_counts(ds, sp.train).tolist() == [10, 10]


def test_infeasible_split_names_class():
    ds = generate_synthetic_imbalanced((30, 5), seed=1)
    with pytest.raises(ContractError, match="class 1"):
        make_imbalanced_split(ds, SplitSpec(6, 10))


def test_class_counts_examples():
    ds = generate_synthetic_imbalanced((50, 50), seed=0)
    assert class_counts(ds, []).tolist() == [0, 0]
    assert class_counts(ds, np.arange(100)).tolist() == [50, 50]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 15), st.integers(1, 40), st.floats(0.0, 0.5), st.integers(0, 10_000))
def test_split_invariants(lo, hi, vf, seed):
    ds = generate_synthetic_imbalanced((60, 20), sizes=(4, 5), seed=0)
    sp = make_imbalanced_split(ds, SplitSpec(lo, hi, validation_fraction=vf, seed=seed))
    parts = [set(sp.train.tolist()), set(sp.validation.tolist()), set(sp.test.tolist())]
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    assert set().union(*parts) == set(range(80))
    assert minority_first(class_counts(ds, sp.train), sp.minority_class).tolist() == [lo, hi]
    assert SplitResult.from_dict(sp.to_dict()).to_dict() == sp.to_dict()


def test_longtail_counts():
    assert longtail_counts(3, 20, 10.0) == [20, 6, 2]
    assert longtail_counts(4, 7, 1.0) == [7, 7, 7, 7]
    assert min(longtail_counts(5, 3, 1000.0)) >= 1


def test_longtail_node_split():
    ds = generate_synthetic_node_dataset((80, 60, 40), feature_dim=8, seed=0)
    sp = make_longtail_node_split(ds, 10.0, 20, 0.25, seed=1)
    counts = class_counts(ds, sp.train)
    assert sorted(counts.tolist(), reverse=True) == [20, 6, 2]
    assert counts[0] == 20  # most frequent class gets the base count
    with pytest.raises(ContractError):
        make_longtail_node_split(ds, 10.0, 500, 0.25, seed=1)
