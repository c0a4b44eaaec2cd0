import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from artifact import decanter as dc
from artifact.numerics import ContractError, RngStream, finite_diff_check

e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def test_infonce_examples():
    same3 = np.tile(e1, (3, 1))
    _, per = dc.infonce_loss(same3, same3)
    np.testing.assert_allclose(per, math.log(2))
    _, per = dc.infonce_loss(same3[:2], same3[:2])
    np.testing.assert_allclose(per, 0.0, atol=1e-15)
    _, per = dc.infonce_loss(np.stack([e1, e2]), np.stack([e1, e2]))
    assert per[0] == pytest.approx(-1.0)


def test_infonce_include_positive_and_errors():
    same = np.tile(e1, (2, 1))
    _, per = dc.infonce_loss(same, same, "include_positive")
    np.testing.assert_allclose(per, math.log(2))
    with pytest.raises(ContractError):
        dc.infonce_loss(e1[None, :], e1[None, :])
    with pytest.raises(ContractError):
        dc.infonce_loss(same, same, "both")


@pytest.mark.parametrize("denominator", dc.DENOMINATORS)
@pytest.mark.parametrize("temperature", [1.0, 0.5])
def test_infonce_gradient(denominator, temperature):
    rng = RngStream(0, "nce")
    z1, z2 = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    _, _, g1, g2 = dc.infonce_loss_and_grad(z1, z2, denominator, temperature)
    both = np.concatenate([z1.ravel(), z2.ravel()])
    f = lambda v: dc.infonce_loss(v[:15].reshape(5, 3), v[15:].reshape(5, 3), denominator, temperature)[0]
    rep = finite_diff_check(f, both, np.concatenate([g1.ravel(), g2.ravel()]), 1e-6)
    assert rep.max_rel_error < 1e-6


def test_sample_score_examples():
    assert dc.sample_score(dc.ViewPredictions(e1, e1)) == 0.0
    assert dc.sample_score(dc.ViewPredictions(e1, e2)) == pytest.approx(math.sqrt(2))
    vp = dc.ViewPredictions(np.array([0.6, 0.8]), np.array([0.8, 0.6]))
    assert dc.sample_score(vp) == pytest.approx(0.2828427, abs=1e-7)


def test_normalize_and_rank_examples():
    out = dc.normalize_and_rank([dc.ScoredSample(i, r) for i, r in enumerate([2.0, 4.0, 6.0])])
    assert [s.sample_id for s in out] == [2, 1, 0]
    assert [s.normalized for s in out] == [1.0, 0.5, 0.0]
    flat = dc.normalize_and_rank([dc.ScoredSample(i, 3.0) for i in (5, 1, 3)])
    assert [s.sample_id for s in flat] == [1, 3, 5] and all(s.normalized == 0.5 for s in flat)
    np.testing.assert_array_equal(dc.normalize_scores([0.1, 0.9]), [0.0, 1.0])


@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 10, allow_nan=False)))
def test_rank_properties(raw):
    ids = np.arange(len(raw)) * 3 + 1
    ranked = dc.rank_order(ids, raw)
    assert ranked[0] == ids[np.argmax(raw)]  # argmax picks the first (lowest id) maximum
    norm = dc.normalize_scores(raw)
    assert np.all((norm >= 0) & (norm <= 1))
    order = np.argsort(raw, kind="stable")
    assert np.all(np.diff(norm[order]) >= 0)


def test_subset_size_examples():
    s = dc.SubsetSchedule(1000, 100, 10)
    assert dc.subset_size_at(s, 50) == 500
    assert dc.subset_size_at(s, 100) == 10
    assert dc.subset_size_at(s, 25) == 854
    with pytest.raises(ContractError):
        dc.subset_size_at(s, 0)


def test_average_budget():
    s0 = dc.SubsetSchedule(1000, 100, 0)
    mean0 = np.mean([dc.subset_size_at(s0, t) / 1000 for t in range(1, 101)])
    assert 0.48 <= mean0 <= 0.51
    sd = dc.SubsetSchedule(1000, 100, dc.default_min_size(1000))
    assert np.mean([dc.subset_size_at(sd, t) / 1000 for t in range(1, 101)]) <= 0.53


def state_with_bin(active, full, eps, m0=6, T=10):
    sched = dc.SubsetSchedule(m0, T, 0)
    st = dc.initial_state(full, eps, sched)
    active = np.sort(np.asarray(active))
    return dc.DecanterState(st.full, active, np.setdiff1d(st.full, active), eps, sched, 1)


def test_decant_update_keeps_top_and_draws_one():
    full = np.arange(10)
    ranked = np.array([5, 2, 8, 0, 7, 4])  # a..f
    st = state_with_bin(ranked, full, 0.25)
    new = dc.decant_update(st, ranked, RngStream(0, "recycle"), next_size=4)
    assert set(new.active.tolist()) >= {5, 2, 8}
    drawn = set(new.active.tolist()) - {5, 2, 8}
    assert len(drawn) == 1 and drawn <= {1, 3, 6, 9}
    new.check()


def test_decant_update_no_exploration_and_backfill():
    ranked = np.array([5, 2, 8, 0, 7, 4])
    st = state_with_bin(ranked, np.arange(10), 0.0)
    assert dc.decant_update(st, ranked, RngStream(0, "r"), 4).active.tolist() == [0, 2, 5, 8]
    st = state_with_bin(ranked, ranked, 0.25)  # empty bin
    assert dc.decant_update(st, ranked, RngStream(0, "r"), 4).active.tolist() == [0, 2, 5, 8]


def test_decant_update_errors():
    st = state_with_bin(np.arange(4), np.arange(6), 0.1)
    with pytest.raises(ContractError):
        dc.decant_update(st, np.arange(4), RngStream(0, "r"), 7)
    with pytest.raises(ContractError):
        dc.decant_update(st, np.arange(3), RngStream(0, "r"), 2)
    with pytest.raises(ContractError):
        dc.initial_state(np.arange(3), 1.0, dc.SubsetSchedule(3, 5))


def run_epochs(n, T, eps, seed, ranking="random"):
    sched = dc.SubsetSchedule(n, T, dc.default_min_size(n))
    st = dc.initial_state(np.arange(n), eps, sched)
    rng = RngStream(seed, "toy")
    history = [st]
    for t in range(1, T):
        if ranking == "random":
            raw = rng.child(t).uniform(size=st.size)
        else:
            raw = -st.active.astype(float)  # fixed preference for low ids
        st = dc.decant_update(st, dc.rank_order(st.active, raw), rng.child("recycle", t))
        history.append(st)
    return sched, history


@settings(max_examples=20, deadline=None)
@given(st.integers(10, 120), st.integers(2, 60), st.floats(0.0, 0.9), st.integers(0, 1000))
def test_partition_and_size_laws(n, T, eps, seed):
    sched, history = run_epochs(n, T, eps, seed)
    for t, s in enumerate(history, start=1):
        s.check()
        if t > 1:
            assert s.size == dc.subset_size_at(sched, t)


def test_reachability_200_epochs():
    _, history = run_epochs(100, 200, 0.1, seed=0, ranking="fixed")
    start = next(k for k, s in enumerate(history) if len(s.recycle_bin) >= 10)
    binned = set(history[start].recycle_bin.tolist())
    returned = set()
    for s in history[start + 1:]:
        returned |= binned & set(s.active.tolist())
    assert len(returned) >= 0.95 * len(binned)
