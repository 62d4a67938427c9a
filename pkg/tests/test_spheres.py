"""Concentric-spheres hard instance: cap measure closed forms, exact ball
masses, conditional sampling law, the angular lemmas the dichotomy rests
on, and the best-linear-loss search."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

import explaudit as ex
from explaudit.core import Ball
from explaudit.spheres import (
    SCAN_CSV_HEADER,
    SpheresDistribution,
    SpheresInstance,
    ball_cap_decomposition,
    best_linear_loss,
    f_spheres,
    psi,
    psi_inverse,
    sample_in_ball,
    scan_balls,
    theorem3_scan,
)

D5 = SpheresInstance(5)


# ---------------------------------------------------------------------------
# instance constants and target labels
# ---------------------------------------------------------------------------


def test_instance_constants():
    assert D5.alpha == pytest.approx(1.0 / 2293760000.0, rel=1e-15)
    assert D5.beta == pytest.approx(1.0 / 89600.0, rel=1e-15)
    assert D5.radii == pytest.approx(
        (1.0 - D5.alpha, 1.0, 1.0 + D5.beta), rel=1e-15
    )
    assert D5.mass_threshold == pytest.approx(3.0**-4, rel=1e-15)
    x = D5.x_star
    assert x.shape == (5,)
    assert x[0] == 1.0 + D5.beta and np.all(x[1:] == 0.0)


def test_instance_dimension_gate():
    with pytest.raises(ex.ParameterOutOfRange):
        SpheresInstance(4)


def test_f_spheres_labels_by_shell(rng):
    u = ex.sample_uniform_sphere(200, 5, rng)
    inner, middle, outer = (u * r for r in D5.radii)
    assert np.all(f_spheres(D5, inner) == 1)
    assert np.all(f_spheres(D5, middle) == -1)
    assert np.all(f_spheres(D5, outer) == 1)
    # thresholds sit halfway in squared norm
    assert f_spheres(D5, np.sqrt(1.0 - D5.alpha / 2.0) * u[:1]) == 1
    assert f_spheres(D5, np.sqrt(1.0 + D5.beta / 2.0) * u[:1]) == -1


def test_f_spheres_dimension_mismatch():
    with pytest.raises(ex.DimensionMismatch):
        f_spheres(D5, np.zeros((3, 4)))


# ---------------------------------------------------------------------------
# the cap measure Psi
# ---------------------------------------------------------------------------


def test_psi_boundary_values():
    for d in (3, 5, 8, 20):
        assert psi(0.0, d) == 0.0
        assert psi(math.pi, d) == 1.0
        assert psi(0.5 * math.pi, d) == pytest.approx(0.5, abs=1e-15)


def test_psi_d3_closed_form():
    thetas = np.linspace(0.0, math.pi, 101)
    want = 0.5 * (1.0 - np.cos(thetas))
    assert np.allclose(psi(thetas, 3), want, atol=1e-10)


def test_psi_mirror_symmetry():
    thetas = np.linspace(0.0, math.pi, 61)
    for d in (5, 9):
        assert np.allclose(
            psi(math.pi - thetas, d), 1.0 - psi(thetas, d), atol=1e-14
        )


def test_psi_matches_quadrature():
    # dual route: Psi is the normalized integral of sin^(d-2)
    for d in (5, 8, 13):
        z = integrate.quad(lambda t: math.sin(t) ** (d - 2), 0.0, math.pi)[0]
        for theta in (0.2, 0.7, 1.2, 0.5 * math.pi, 2.1, 3.0):
            part = integrate.quad(
                lambda t: math.sin(t) ** (d - 2), 0.0, theta
            )[0]
            assert psi(theta, d) == pytest.approx(part / z, abs=1e-12)


def test_psi_inverse_round_trip():
    for d in (5, 8, 17):
        # angles near pi are unrecoverable in doubles at large d (the cap
        # complement carries ~(pi-theta)^(d-1) mass, below resolution), so
        # the theta round trip stays where the CDF is invertible
        thetas = np.linspace(1e-4, 2.2, 200)
        assert np.allclose(psi_inverse(psi(thetas, d), d), thetas, atol=1e-7)
        ws = np.linspace(0.0, 1.0, 200)
        assert np.allclose(psi(psi_inverse(ws, d), d), ws, atol=1e-12)


def test_psi_domain_gates():
    with pytest.raises(ex.ParameterOutOfRange):
        psi(-0.5, 5)
    with pytest.raises(ex.ParameterOutOfRange):
        psi(0.5, 1)
    with pytest.raises(ex.ParameterOutOfRange):
        psi_inverse(1.5, 5)


def test_psi_scaling_lemmas_module_scale():
    # the two-sided cap-shrinkage bounds behind the locality dichotomy
    for d in (5, 11):
        for theta in (0.3, 1.0, 0.5 * math.pi, 2.5):
            for c in (0.2, 0.5, 0.8):
                ratio = psi(c * theta, d) / psi(theta, d)
                assert ratio >= c ** (d - 1) - 1e-12
                if theta <= 0.5 * math.pi:
                    upper = c * (math.sin(c * theta) / math.sin(theta)) ** (d - 2)
                    assert ratio <= upper + 1e-12


# ---------------------------------------------------------------------------
# angular lemmas
# ---------------------------------------------------------------------------


def test_cosine_inequality_sweep(rng):
    # |cos a - cos b| <= c forces |a - b| <= 4 sqrt(c)
    a = rng.uniform(0.0, math.pi, 10_000)
    b = rng.uniform(0.0, math.pi, 10_000)
    c = np.abs(np.cos(a) - np.cos(b))
    assert np.all(np.abs(a - b) <= 4.0 * np.sqrt(c) + 1e-12)


def test_dot_product_interval_lemma_exact():
    # z uniform on the unit sphere, w fixed: a width-t window on <w, z> with
    # t <= 1/(1370 d^2) captures at most 1/10 of the mass.  The window mass
    # is a Psi difference, so the bound reduces to a deterministic scan.
    for d in (5, 8):
        t = 1.0 / (1370.0 * d * d)
        s_grid = np.concatenate(
            [np.linspace(-1.0, 1.0 - t, 4001), [-t / 2.0]]
        )
        pr = psi(np.arccos(s_grid), d) - psi(np.arccos(s_grid + t), d)
        assert float(pr.max()) <= 0.1


def test_dot_product_interval_lemma_monte_carlo(rng):
    d = 5
    t = 1.0 / (1370.0 * d * d)
    z = ex.sample_uniform_sphere(200_000, d, rng)
    dots = z[:, 0]
    # the worst window straddles zero, where the dot density peaks
    hits = float(np.mean((dots >= -t / 2.0) & (dots <= t / 2.0)))
    stderr = math.sqrt(0.1 * 0.9 / dots.size)
    assert hits <= 0.1 + 3.0 * stderr


# ---------------------------------------------------------------------------
# cap decomposition and exact ball mass
# ---------------------------------------------------------------------------


def test_everything_ball_swallows_all():
    dec = ball_cap_decomposition(D5, Ball(np.zeros(5), 2.0 + D5.beta))
    assert dec.thetas == (math.pi, math.pi, math.pi)
    assert dec.mass == 1.0


def test_origin_ball_radius_selects_spheres():
    dec = ball_cap_decomposition(D5, Ball(np.zeros(5), 1.0))
    # radius exactly 1 swallows the inner and middle spheres only
    assert dec.thetas == (math.pi, math.pi, 0.0)
    assert dec.mass == pytest.approx(2.0 / 3.0, abs=1e-15)


def test_sliver_ball_touches_outer_sphere_only():
    ball = Ball(D5.x_star, D5.beta / 8.0)
    dec = ball_cap_decomposition(D5, ball)
    assert dec.thetas[0] == 0.0 and dec.thetas[1] == 0.0
    assert 0.0 < dec.thetas[2] < 0.1
    assert dec.mass == pytest.approx(dec.cap_fractions[2] / 3.0, rel=1e-15)
    assert dec.mass < D5.mass_threshold


def test_cap_angle_closed_form():
    # ball at distance a from origin, radius r, sphere s: the cut cap has
    # cos(theta) = (s^2 + a^2 - r^2) / (2 s a)
    a, r = 1.3, 0.4
    center = np.zeros(5)
    center[2] = a
    dec = ball_cap_decomposition(D5, Ball(center, r))
    for sphere, s in enumerate(D5.radii):
        want = math.acos((s * s + a * a - r * r) / (2.0 * s * a))
        assert dec.thetas[sphere] == pytest.approx(want, abs=1e-14)


def test_ball_mass_matches_rejection_sampling(rng):
    dist = SpheresDistribution(5)
    ball = Ball(D5.x_star, 0.6)
    exact = dist.ball_mass(ball)
    n = 200_000
    X = dist.sample_batch(n, rng)
    hat = float(np.mean(ball.contains_batch(X)))
    sigma = math.sqrt(exact * (1.0 - exact) / n)
    assert abs(hat - exact) <= 4.0 * sigma


def test_cap_decomposition_dimension_gate():
    with pytest.raises(ex.DimensionMismatch):
        ball_cap_decomposition(D5, Ball(np.zeros(4), 1.0))


# ---------------------------------------------------------------------------
# conditional sampling in a ball
# ---------------------------------------------------------------------------


def test_sample_in_ball_containment_and_norms(rng):
    ball = Ball(D5.x_star, 0.5)
    X = sample_in_ball(D5, ball, 4000, rng)
    assert X.shape == (4000, 5)
    assert bool(np.all(ball.contains_batch(X)))
    norms = np.linalg.norm(X, axis=1)
    on_some_sphere = np.zeros(4000, dtype=bool)
    for s in D5.radii:
        on_some_sphere |= np.abs(norms - s) < 1e-9
    assert np.all(on_some_sphere)


def nearest_sphere(instance, X):
    # the inner and middle radii differ by alpha ~ 1e-10: assign by argmin,
    # not by a tolerance window
    norms = np.linalg.norm(X, axis=1)
    return np.argmin(
        np.abs(norms[:, None] - np.asarray(instance.radii)[None, :]), axis=1
    )


def test_sample_in_ball_sphere_weights(rng):
    ball = Ball(D5.x_star, 0.5)
    dec = ball_cap_decomposition(D5, ball)
    X = sample_in_ball(D5, ball, 100_000, rng)
    which = nearest_sphere(D5, X)
    total = sum(dec.cap_fractions)
    for sphere in range(3):
        want = dec.cap_fractions[sphere] / total
        got = float(np.mean(which == sphere))
        sigma = math.sqrt(max(want * (1.0 - want), 1e-12) / X.shape[0])
        assert abs(got - want) <= 4.0 * sigma + 1e-12


def test_sample_in_ball_polar_angle_law(rng):
    # on one sphere the polar angle follows Psi(.) / Psi(theta_cap)
    ball = Ball(D5.x_star, 0.3)
    dec = ball_cap_decomposition(D5, ball)
    axis = D5.x_star / np.linalg.norm(D5.x_star)
    X = sample_in_ball(D5, ball, 30_000, rng)
    on_middle = nearest_sphere(D5, X) == 1
    ang = np.arccos(np.clip((X[on_middle] @ axis) / 1.0, -1.0, 1.0))
    theta_cap = dec.thetas[1]
    assert float(ang.max()) <= theta_cap + 1e-9
    cdf = lambda tt: np.clip(psi(np.minimum(tt, theta_cap), 5) / psi(theta_cap, 5), 0, 1)
    ks = stats.kstest(ang, cdf)
    assert ks.pvalue > 1e-4


def test_sample_in_empty_ball_raises(rng):
    gap_ball = Ball(np.zeros(5), 0.5)  # strictly inside the inner sphere
    with pytest.raises(ex.ZeroMassBall):
        sample_in_ball(D5, gap_ball, 10, rng)


# ---------------------------------------------------------------------------
# best linear loss and the scan
# ---------------------------------------------------------------------------


def test_best_linear_loss_sliver_is_trivial(rng):
    # only outer-sphere points: a constant-side linear rule is perfect
    ball = Ball(D5.x_star, D5.beta / 8.0)
    loss, clf = best_linear_loss(
        D5, ball, rng, n_train=500, n_holdout=1000, restarts=1
    )
    assert loss == 0.0
    assert isinstance(clf, ex.LinearClassifier)


def test_best_linear_loss_everything_ball_is_large(rng):
    ball = Ball(np.zeros(5), 2.0 + D5.beta)
    loss, _ = best_linear_loss(
        D5, ball, rng, n_train=2000, n_holdout=6000, restarts=2
    )
    assert loss >= 0.30


def test_scan_balls_structure(rng):
    balls = scan_balls(D5, rng, n_random=12)
    assert len(balls) == 14
    assert balls[0].radius == 2.0 + D5.beta
    assert balls[1].radius == D5.beta / 8.0
    x = D5.x_star
    for b in balls:
        assert float(np.linalg.norm(x - b.center)) <= b.radius + 1e-12


def test_theorem3_scan_small(rng):
    report = theorem3_scan(
        5, rng, n_random=3, n_train=600, n_holdout=1200, restarts=1
    )
    assert len(report.rows) == 5
    assert report.loss_floor == pytest.approx(1.0 / 6.0 - 0.02)
    for row in report.rows:
        assert row.verdict in ("consistent", "violation")
        assert row.mass_threshold == pytest.approx(D5.mass_threshold)
        assert len(row.to_csv_row()) == len(SCAN_CSV_HEADER)
    assert report.all_consistent == all(
        r.verdict == "consistent" for r in report.rows
    )
    # the fixed rows: everything-ball loss is macroscopic, sliver is tiny
    assert report.rows[0].best_loss >= 0.25
    assert report.rows[1].mass < D5.mass_threshold


def test_spheres_distribution_protocol(rng):
    dist = SpheresDistribution(6)
    X = dist.sample_batch(512, rng)
    assert X.shape == (512, 6)
    radii = np.asarray(SpheresInstance(6).radii)
    norms = np.linalg.norm(X, axis=1)
    assert np.all(np.min(np.abs(norms[:, None] - radii[None, :]), axis=1) < 1e-9)
    assert dist.to_spec() == {"kind": "spheres", "dim": 6}
