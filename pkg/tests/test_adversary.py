"""The indistinguishable classifier pair: sub-cell label law, exact losses,
likelihood ratios against closed forms, records, and the experiment drivers."""

import json
import math

import numpy as np
import pytest

import explaudit as ex
from explaudit.adversary import (
    EXPLICIT_LABEL_CAP,
    ExactLosses,
    FStarInstance,
    HonestExplainer,
    choose_K,
    constant_estimator,
    exact_losses,
    likelihood_ratio,
    oracle_estimator,
    sample_f_star,
    trial_rng,
)

LOWER_CFG = ex.AuditorConfig(gamma=0.02, eps1=0.02, eps2=0.02, delta=0.01)


# ---------------------------------------------------------------------------
# choose_K
# ---------------------------------------------------------------------------


def test_choose_k_frozen_reference():
    assert choose_K(0.02, 0.02, 0.02, 0.01, 32768) == 490485158593


def test_choose_k_monotone_and_gated():
    base = choose_K(0.02, 0.02, 0.02, 0.01, 1024)
    assert choose_K(0.02, 0.02, 0.02, 0.01, 2048) > base
    assert choose_K(0.04, 0.02, 0.02, 0.01, 1024) < base
    with pytest.raises(ex.ParameterOutOfRange):
        choose_K(0.02, 0.02, 0.02, 0.0, 1024)
    with pytest.raises(ex.ParameterOutOfRange):
        choose_K(0.02, 0.02, 0.02, 0.01, 0)


# ---------------------------------------------------------------------------
# sampling f*
# ---------------------------------------------------------------------------


def test_sample_f_star_structure(small_partition, l1_system, rng):
    inst = sample_f_star(small_partition, l1_system, rng, world=1)
    L = small_partition.n_cells
    assert inst.world == 1
    assert inst.k_idx.shape == (L,)
    assert np.all((inst.k_idx >= 1) & (inst.k_idx <= 2 * l1_system.m))
    assert np.all(
        (inst.minus_counts >= 0) & (inst.minus_counts <= inst.n_subcells)
    )
    assert inst.explicit_labels is not None  # desk scale materializes
    assert inst.explicit_labels.shape == (L, small_partition.n_subcells)
    # labels per cell agree with the drawn counts
    assert np.array_equal(
        np.sum(inst.explicit_labels == -1, axis=1), inst.minus_counts
    )


def test_sample_f_star_world_choices(small_partition, l1_system, rng):
    with pytest.raises(ex.ParameterOutOfRange):
        sample_f_star(small_partition, l1_system, rng, world=2)
    worlds = {
        sample_f_star(small_partition, l1_system, np.random.default_rng(s)).world
        for s in range(12)
    }
    assert worlds == {0, 1}


def test_sample_f_star_minus_fractions_track_r(uniform1d, l1_system, rng):
    # N = 2^14 sub-cells: each cell's minus fraction sits within 3 sigma of
    # its drawn mixture probability r
    part = ex.build_partition(uniform1d, 1.0 / 32.0, 1 << 14)
    inst = sample_f_star(part, l1_system, rng, world=0)
    N = inst.n_subcells
    r = inst.r_per_cell
    frac = inst.minus_counts / N
    sigma = np.sqrt(r * (1 - r) / N)
    assert np.all(np.abs(frac - r) <= 3 * sigma)


def test_r_values_switch_with_world(small_partition, l1_system, rng):
    w1 = sample_f_star(small_partition, l1_system, rng, world=1)
    w0 = sample_f_star(small_partition, l1_system, rng, world=0)
    assert np.array_equal(w1.r_values, l1_system.p)
    assert np.array_equal(w0.r_values, l1_system.q)
    assert np.array_equal(w1.r_per_cell, l1_system.p[w1.k_idx - 1])


# ---------------------------------------------------------------------------
# measurability (one label per sub-cell) and the lazy stream
# ---------------------------------------------------------------------------


def make_lazy(small_partition, l1_system, minus_counts, seed=(1, 2, 3, 4)):
    L = small_partition.n_cells
    return FStarInstance(
        partition=small_partition,
        probs=l1_system,
        world=1,
        k_idx=np.ones(L, dtype=np.int64),
        minus_counts=np.asarray(minus_counts, dtype=np.int64),
        explicit_labels=None,
        label_seed=seed,
    )


def subcell_centers(part):
    """One point per (cell, sub), row-major, plus the index arrays."""
    pts, cells, subs = [], [], []
    for c in range(part.n_cells):
        for s, r in enumerate(part.sub_rectangles[c]):
            pts.append(0.5 * (r.lo + r.hi))
            cells.append(c)
            subs.append(s)
    return np.asarray(pts), np.asarray(cells), np.asarray(subs)


def test_explicit_instance_labels_points_consistently(
    small_partition, l1_system, rng
):
    inst = sample_f_star(small_partition, l1_system, rng, world=1)
    # 10^4 points crammed into one sub-cell must all get the same label
    r = small_partition.sub_rectangles[3][5]
    pts = np.linspace(r.lo[0], r.hi[0], 10_000, endpoint=True)[1:, None]
    labels = inst.predict_batch(pts)
    assert np.all(labels == labels[0])


def test_lazy_urn_reproduces_exact_counts(small_partition, l1_system):
    counts = [0, 1, 2, 3, 4, 5, 6, 8]
    inst = make_lazy(small_partition, l1_system, counts)
    pts, cells, _ = subcell_centers(small_partition)
    labels = inst.predict_batch(pts)
    for c in range(small_partition.n_cells):
        assert int(np.sum(labels[cells == c] == -1)) == counts[c]


def test_lazy_labels_are_cached_and_order_free(small_partition, l1_system, rng):
    inst = make_lazy(small_partition, l1_system, [4] * 8)
    pts, _, _ = subcell_centers(small_partition)
    first = inst.predict_batch(pts)
    perm = rng.permutation(pts.shape[0])
    again = inst.predict_batch(pts[perm])
    assert np.array_equal(again, first[perm])


def test_lazy_stream_is_seed_deterministic(small_partition, l1_system):
    pts, _, _ = subcell_centers(small_partition)
    a = make_lazy(small_partition, l1_system, [3] * 8).predict_batch(pts)
    b = make_lazy(small_partition, l1_system, [3] * 8).predict_batch(pts)
    assert np.array_equal(a, b)
    c = make_lazy(small_partition, l1_system, [3] * 8, seed=(9, 9, 9, 9))
    assert not np.array_equal(c.predict_batch(pts), a)  # fresh seed, fresh draw


def test_points_outside_support_predict_plus_one(small_partition, l1_system, rng):
    inst = sample_f_star(small_partition, l1_system, rng)
    out = inst.predict_batch(np.array([[2.0], [-3.0]]))
    assert np.all(out == 1)


# ---------------------------------------------------------------------------
# exact losses
# ---------------------------------------------------------------------------


def test_exact_losses_closed_form(small_partition, l1_system):
    counts = [0, 1, 2, 3, 4, 5, 6, 7]
    inst = make_lazy(small_partition, l1_system, counts)
    losses = exact_losses(inst)
    assert np.allclose(losses.losses, np.array(counts) / 8.0, atol=0)
    assert np.allclose(losses.masses, 0.125, atol=1e-15)
    # threshold is inclusive: cells at exactly alpha count
    assert losses.explainability(0.5) == pytest.approx(0.5, abs=1e-12)
    assert losses.explainability(0.25) == pytest.approx(0.75, abs=1e-12)
    assert losses.explainability(0.0) == pytest.approx(1.0, abs=1e-12)
    assert losses.explainability(1.1) == 0.0


def test_exact_losses_match_empirical_disagreement(
    small_partition, l1_system, rng
):
    inst = sample_f_star(small_partition, l1_system, rng, world=0)
    losses = exact_losses(inst)
    # the constant +1 rule disagrees with f* exactly on minus sub-cells, and
    # sub-cells carry equal mass: brute-force count over the explicit table
    want = np.sum(inst.explicit_labels == -1, axis=1) / inst.n_subcells
    assert np.allclose(losses.losses, want, atol=0)


# ---------------------------------------------------------------------------
# honest explanations
# ---------------------------------------------------------------------------


def test_honest_explainer_reports_true_cell(small_partition, l1_system, rng):
    inst = sample_f_star(small_partition, l1_system, rng)
    explainer = HonestExplainer(small_partition)
    x = np.array([0.37])
    e = explainer.explain(inst, x)
    idx = small_partition.locate(x[None, :])[0]
    assert e.region == small_partition.rectangles[idx]
    assert e.local == ex.ConstantClassifier(1)
    assert np.array_equal(e.anchor, x)


def test_honest_explainer_batch_matches_scalar(small_partition, l1_system, rng):
    inst = sample_f_star(small_partition, l1_system, rng)
    explainer = HonestExplainer(small_partition)
    X = 1.0 - rng.random((64, 1))
    batch = explainer.explain_batch(inst, X)
    for i in range(0, 64, 7):
        single = explainer.explain(inst, X[i])
        assert batch[i].region == single.region
        assert batch[i].local == single.local
        assert np.array_equal(batch[i].anchor, single.anchor)


def test_honest_explainer_outside_support(small_partition, l1_system, rng):
    explainer = HonestExplainer(small_partition)
    inst = sample_f_star(small_partition, l1_system, rng)
    with pytest.raises(ex.OutsideSupportError):
        explainer.explain(inst, np.array([5.0]))
    with pytest.raises(ex.OutsideSupportError):
        explainer.explain_batch(inst, np.array([[0.5], [5.0]]))


# ---------------------------------------------------------------------------
# likelihood ratio
# ---------------------------------------------------------------------------


@pytest.fixture()
def one_cell(uniform1d):
    # a single top-level cell with 8 sub-cells: every point shares the cell
    return ex.build_partition(uniform1d, 0.3, 8)


def sub_center(part, cell, sub):
    r = part.sub_rectangles[cell][sub]
    return 0.5 * (r.lo + r.hi)


def test_likelihood_ratio_l1_closed_form(one_cell, l1_system):
    # one minus and three plus labels on four distinct sub-cells: the cell
    # factor is mean p(1-p)^3 over mean q(1-q)^3; moments match only to
    # degree 2m-1 = 3, so the degree-4 polynomial leaves a visible gap
    pts = np.array([sub_center(one_cell, 0, s) for s in range(4)])
    Y = np.array([-1, 1, 1, 1])
    got = likelihood_ratio(one_cell, l1_system, pts, Y)
    direct = float(
        np.mean(l1_system.p * (1 - l1_system.p) ** 3)
        / np.mean(l1_system.q * (1 - l1_system.q) ** 3)
    )
    assert got == pytest.approx(1.0036299396996216, rel=1e-12)
    assert got == pytest.approx(direct, rel=1e-12)


def test_likelihood_ratio_is_one_below_2m_occupancy(one_cell, l1_system):
    # three distinct sub-cells: degree 3 <= 2m-1, the moment matching makes
    # the worlds exactly indistinguishable
    pts = np.array([sub_center(one_cell, 0, s) for s in range(3)])
    got = likelihood_ratio(one_cell, l1_system, pts, np.array([-1, 1, 1]))
    assert got == 1.0
    log_got = likelihood_ratio(
        one_cell, l1_system, pts, np.array([-1, 1, 1]), return_log=True
    )
    assert log_got == 0.0


def test_likelihood_ratio_dedups_repeated_subcell_hits(one_cell, l1_system):
    # hitting one sub-cell twice with one label collapses to a single literal
    pts3 = np.array(
        [
            sub_center(one_cell, 0, 0),
            sub_center(one_cell, 0, 0) - 1e-4,  # same sub-cell, second hit
            sub_center(one_cell, 0, 1),
        ]
    )
    got = likelihood_ratio(one_cell, l1_system, pts3, np.array([-1, -1, 1]))
    pts2 = np.array([sub_center(one_cell, 0, 0), sub_center(one_cell, 0, 1)])
    want = likelihood_ratio(one_cell, l1_system, pts2, np.array([-1, 1]))
    assert got == pytest.approx(want, rel=1e-15)


def test_likelihood_ratio_error_cases(one_cell, l1_system):
    p0 = sub_center(one_cell, 0, 0)
    with pytest.raises(ex.ParameterOutOfRange):
        likelihood_ratio(one_cell, l1_system, np.array([p0]), np.array([1, -1]))
    with pytest.raises(ex.InconsistentLabels):
        likelihood_ratio(
            one_cell,
            l1_system,
            np.array([p0, p0 - 1e-5]),
            np.array([1, -1]),
        )
    with pytest.raises(ex.OutsideLabelViolation):
        likelihood_ratio(
            one_cell, l1_system, np.array([[5.0]]), np.array([-1])
        )


def test_likelihood_ratio_outside_plus_points_are_free(one_cell, l1_system):
    pts = np.array([sub_center(one_cell, 0, 0), [5.0]])
    got = likelihood_ratio(one_cell, l1_system, pts, np.array([-1, 1]))
    want = likelihood_ratio(
        one_cell, l1_system, pts[:1], np.array([-1])
    )
    assert got == pytest.approx(want, rel=1e-15)


def test_likelihood_ratio_empty_sample(one_cell, l1_system):
    assert likelihood_ratio(
        one_cell, l1_system, np.empty((0, 1)), np.empty((0,))
    ) == 1.0


def test_likelihood_ratio_cells_multiply(small_partition, l1_system):
    # one minus literal in each of two different cells: factors multiply
    a = sub_center(small_partition, 0, 0)
    b = sub_center(small_partition, 5, 2)
    both = likelihood_ratio(
        small_partition, l1_system, np.array([a, b]), np.array([-1, -1])
    )
    fa = likelihood_ratio(small_partition, l1_system, np.array([a]), np.array([-1]))
    fb = likelihood_ratio(small_partition, l1_system, np.array([b]), np.array([-1]))
    assert both == pytest.approx(fa * fb, rel=1e-12)


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


def test_fstar_record_round_trip_explicit(small_partition, accept_probs, rng):
    inst = sample_f_star(small_partition, accept_probs, rng, world=0)
    rec = json.loads(json.dumps(inst.to_record()))
    again = FStarInstance.from_record(rec)
    assert again.world == 0
    assert np.array_equal(again.k_idx, inst.k_idx)
    assert np.array_equal(again.minus_counts, inst.minus_counts)
    assert np.array_equal(again.explicit_labels, inst.explicit_labels)
    X = 1.0 - rng.random((300, 1))
    assert np.array_equal(again.predict_batch(X), inst.predict_batch(X))


def test_fstar_record_round_trip_lazy(uniform1d, accept_probs, rng):
    # large enough that labels stay virtual: the label seed is the replay key
    part = ex.build_partition(uniform1d, 1.0 / 1024.0, 1 << 15)
    assert part.n_cells * part.n_subcells > EXPLICIT_LABEL_CAP
    inst = sample_f_star(part, accept_probs, rng)
    assert inst.explicit_labels is None
    rec = json.loads(json.dumps(inst.to_record()))
    assert "labels" not in rec
    again = FStarInstance.from_record(rec)
    assert again.explicit_labels is None
    X = 1.0 - np.random.default_rng(3).random((500, 1))
    assert np.array_equal(again.predict_batch(X), inst.predict_batch(X))


def test_fstar_record_rejects_garbage(small_partition, l1_system, rng):
    inst = sample_f_star(small_partition, l1_system, rng)
    with pytest.raises(ex.RecordUnreadable):
        FStarInstance.from_record({"kind": "fstar", "version": 2})
    with pytest.raises(ex.RecordUnreadable):
        FStarInstance.from_record({"kind": "nope"})
    rec = inst.to_record()
    rec["partition"]["cells"][0]["lo"][0] = "0.123"
    with pytest.raises(ex.RecordUnreadable):
        FStarInstance.from_record(rec)


# ---------------------------------------------------------------------------
# experiment drivers (statistical power lives in the acceptance suite)
# ---------------------------------------------------------------------------


def test_lower_bound_oracle_never_fails(uniform1d):
    report = ex.run_lower_bound_experiment(
        uniform1d,
        LOWER_CFG,
        lam=2.5e-4,
        n=50,
        auditor=oracle_estimator,
        trials=8,
        master_seed=11,
        k_subcells=4096,
    )
    assert report.failure_rate == 0.0
    assert report.audit_error_rate == 0.0
    assert report.n_cells == 1024
    assert len(report.trials) == 8


def test_lower_bound_default_auditor_falls_back(uniform1d):
    report = ex.run_lower_bound_experiment(
        uniform1d,
        LOWER_CFG,
        lam=2.5e-4,
        n=50,
        trials=8,
        master_seed=11,
        k_subcells=4096,
        baseline=constant_estimator(0.5 + 2 * LOWER_CFG.eps2),
    )
    # n is far below the anchor requirement: every trial hedges at 1/2
    assert report.audit_error_rate == 1.0
    assert {t.estimate for t in report.trials} == {0.5}
    assert report.baseline_failure_rate is not None
    for t in report.trials:
        assert t.failed == (not t.interval_lo <= 0.5 <= t.interval_hi)


def test_lower_bound_trial_shards_merge_exactly(uniform1d):
    kw = dict(lam=2.5e-4, n=50, auditor=oracle_estimator, master_seed=11,
              k_subcells=4096)
    full = ex.run_lower_bound_experiment(uniform1d, LOWER_CFG, trials=6, **kw)
    a = ex.run_lower_bound_experiment(
        uniform1d, LOWER_CFG, trials=6, trial_range=(0, 3), **kw
    )
    b = ex.run_lower_bound_experiment(
        uniform1d, LOWER_CFG, trials=6, trial_range=(3, 6), **kw
    )
    merged = [t.to_record() for t in a.trials + b.trials]
    assert merged == [t.to_record() for t in full.trials]


def test_trial_rng_is_order_independent():
    a = trial_rng(7, 3).random(4)
    trial_rng(7, 0)
    b = trial_rng(7, 3).random(4)
    assert np.array_equal(a, b)


def test_world_separation_report_structure(uniform1d):
    report = ex.world_separation_experiment(
        uniform1d,
        LOWER_CFG,
        lam=2.5e-4,
        trials=10,
        master_seed=4,
        k_subcells=4096,
    )
    assert report.n_world1 + report.n_world0 == 10
    assert len(report.trials) == 10
    for t in report.trials:
        assert t[1] in (0, 1)
        assert 0.0 <= t[3] <= 1.0 and 0.0 <= t[2] <= t[3]
    rec = report.to_record()
    assert set(rec) >= {"freq_world1", "freq_world0", "n_world1", "n_world0"}
