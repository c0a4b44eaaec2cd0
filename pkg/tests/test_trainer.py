from dataclasses import replace

import numpy as np
import pytest

from artifact import decanter as dc
from artifact.graphcore import SplitSpec, generate_synthetic_node_dataset, make_imbalanced_split, make_longtail_node_split
from artifact.numerics import ContractError
from artifact.trainer import TOGGLES, TrainConfig, evaluate, select_data_diet, train

BASE = TrainConfig(epochs=10, batch_size=8, hidden_dim=8, embed_dim=8, probe_epochs=100)


@pytest.fixture(scope="module")
def setup(small_synthetic):
    ds = small_synthetic
    return ds, make_imbalanced_split(ds, SplitSpec(6, 18, seed=0))


@pytest.fixture(scope="module")
def graphdec_run(setup):
    ds, sp = setup
    return train(ds, sp, BASE)


def weights_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a.params.weights, b.params.weights))


def test_config_validation():
    for bad in (dict(epochs=0), dict(batch_size=1), dict(selector="svm"), dict(lr=0.0), dict(alpha0=1.5)):
        with pytest.raises(ContractError):
            replace(BASE, **bad).validate()


def test_vanilla_everything_off(setup):
    ds, sp = setup
    cfg = replace(BASE, selector="vanilla", **{t: False for t in TOGGLES if t != "self_supervision"})
    r = train(ds, sp, cfg)
    assert all(tr.subset_size == len(sp.train) for tr in r.traces)
    assert all(m.density() == 1.0 for m in r.masks)
    assert r.budget() == 1.0


def test_single_epoch(setup):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, epochs=1))
    assert len(r.traces) == 1 and len(r.scores) == 1
    params, mask, traces = r
    assert traces[0].epoch == 1


def test_determinism_and_workers(setup, graphdec_run):
    ds, sp = setup
    again = train(ds, sp, BASE)
    assert weights_equal(graphdec_run, again)
    parallel = train(ds, sp, replace(BASE, workers=3))
    assert weights_equal(graphdec_run, parallel)
    assert all(np.array_equal(a.raw, b.raw) for a, b in zip(graphdec_run.scores, parallel.scores))


def test_graphdec_follows_decanter_law(setup, graphdec_run):
    ds, sp = setup
    n = len(sp.train)
    warm = BASE.warmup_epochs
    sched = dc.SubsetSchedule(n, BASE.epochs - warm, dc.default_min_size(n))
    sizes = [tr.subset_size for tr in graphdec_run.traces]
    assert sizes[:warm] == [n] * warm
    for t in range(warm + 1, BASE.epochs + 1):
        assert sizes[t - 1] == dc.subset_size_at(sched, t - warm)
    for rec in graphdec_run.scores:
        assert set(rec.ids.tolist()) == set(rec.active.tolist())
    kf = [tr.keep_fraction for tr in graphdec_run.traces]
    assert kf[0] < BASE.alpha0 and all(a >= b for a, b in zip(kf, kf[1:]))


def test_toggle_ss_off_trains_on_everything(setup):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, ss=False))
    assert all(tr.subset_size == len(sp.train) for tr in r.traces)
    assert any(len(rec.active) < len(sp.train) for rec in r.scores)  # decanter state still evolves


def test_toggle_gs_off_same_sizes_other_members(setup, graphdec_run):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, gs=False))
    assert [t.subset_size for t in r.traces] == [t.subset_size for t in graphdec_run.traces]
    assert any(not np.array_equal(a.active, b.active) for a, b in zip(r.scores, graphdec_run.scores))


def test_toggle_cad_off_fixed_size(setup):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, cad=False))
    after = {t.subset_size for t in r.traces[BASE.warmup_epochs:]}
    assert after == {int(round(0.5 * len(sp.train)))}


def test_toggle_rs_off_never_recycles(setup):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, rs=False))
    for a, b in zip(r.scores, r.scores[1:]):
        assert set(b.active.tolist()) <= set(a.active.tolist())


def test_toggle_sg_off_dense(setup):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, sg=False))
    assert all(m.density() == 1.0 for m in r.masks)


def test_toggle_cag_off_final_fraction(setup):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, cag=False))
    assert {t.keep_fraction for t in r.traces} == {BASE.alpha_min}


def test_toggle_rm_off_random_masks(setup, graphdec_run):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, rm=False))
    first, rand_first = graphdec_run.masks[0], r.masks[0]
    assert [int(m.sum()) for m in first.layers] == [int(m.sum()) for m in rand_first.layers]
    assert not all(np.array_equal(a, b) for a, b in zip(first.layers, rand_first.layers))


def test_toggle_rw_off_changes_masks(setup, graphdec_run):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, rw=False))
    t = BASE.reactivation_interval
    assert not all(np.array_equal(a, b) for a, b in zip(r.masks[t - 1].layers, graphdec_run.masks[t - 1].layers))


def test_toggle_self_supervision_off(setup, graphdec_run):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, self_supervision=False))
    assert all(t.loss > 0 for t in r.traces)
    assert not np.array_equal(r.scores[0].raw, graphdec_run.scores[0].raw)


def test_random_subset_budget(setup, graphdec_run):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, selector="random_subset"))
    assert r.budget() == pytest.approx(graphdec_run.budget())


def test_data_diet_examples(setup):
    ds, sp = setup
    full = select_data_diet(ds, sp, BASE, 2, 1.0)
    assert full.tolist() == sorted(sp.train.tolist())
    half = select_data_diet(ds, sp, BASE, 2, 0.5)
    assert len(half) == 12
    assert np.array_equal(half, select_data_diet(ds, sp, BASE, 2, 0.5))
    with pytest.raises(ContractError):
        select_data_diet(ds, sp, BASE, BASE.epochs, 0.5)


def test_data_diet_selector_static_after_pick(setup):
    ds, sp = setup
    r = train(ds, sp, replace(BASE, selector="data_diet", diet_pick_epoch=3))
    post = [rec.active for rec in r.scores[3:]]
    assert all(np.array_equal(post[0], p) for p in post) and len(post[0]) == 12
    assert np.array_equal(r.diet_subset, post[0])


def test_evaluate(setup, graphdec_run):
    ds, sp = setup
    with_test = replace(sp, validation=np.zeros(0, dtype=np.int64), test=sp.validation)
    report, where = evaluate(ds, with_test, graphdec_run, BASE)
    assert where == "test" and 0.0 <= report.f1_macro <= 1.0
    assert sum(map(sum, report.confusion)) == len(sp.validation)
    empty_test = replace(sp, test=np.zeros(0, dtype=np.int64))
    assert evaluate(ds, empty_test, graphdec_run, BASE)[1] == "train"


def test_node_level_task():
    ds = generate_synthetic_node_dataset((30, 20, 10), feature_dim=6, seed=0)
    sp = make_longtail_node_split(ds, 5.0, 12, 0.25, seed=0)
    cfg = replace(BASE, epochs=6)
    r = train(ds, sp, cfg)
    assert len(r.scores) == 6 and r.scores[0].ids.tolist() == sorted(sp.train.tolist())
    report, _ = evaluate(ds, sp, r, cfg)
    assert len(report.confusion) == 3
