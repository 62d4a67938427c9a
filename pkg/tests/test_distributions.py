"""Product distributions: CDF/quantile consistency, exact rectangle mass,
conditional sampling laws, median splits, and sphere sampling."""

import numpy as np
import pytest
from scipy import stats

import explaudit as ex
from explaudit.core import HyperRectangle
from explaudit.distributions import (
    GaussianMarginal,
    ProductDistribution,
    UniformMarginal,
    distribution_from_spec,
    marginal_from_spec,
    sample_uniform_sphere,
)

# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------


def test_uniform_cdf_ppf_round_trip():
    m = UniformMarginal(-2.0, 3.0)
    u = np.linspace(0.0, 1.0, 101)
    assert np.allclose(m.cdf(m.ppf(u)), u, atol=1e-12)
    x = np.linspace(-2.0, 3.0, 101)
    assert np.allclose(m.ppf(m.cdf(x)), x, atol=1e-12)


def test_gaussian_cdf_ppf_round_trip():
    m = GaussianMarginal(1.5, 0.5)
    u = np.linspace(0.001, 0.999, 101)
    assert np.allclose(m.cdf(m.ppf(u)), u, atol=1e-12)


def test_uniform_sample_lands_in_half_open_interval(rng):
    m = UniformMarginal(0.0, 1.0)
    x = m.sample(20_000, rng)
    assert np.all(x > 0.0) and np.all(x <= 1.0)


@pytest.mark.parametrize(
    "bad",
    [(0.0, 0.0), (1.0, -1.0), (float("nan"), 1.0), (0.0, float("inf"))],
)
def test_uniform_marginal_rejects_bad_bounds(bad):
    with pytest.raises(ex.ParameterOutOfRange):
        UniformMarginal(*bad)


def test_gaussian_marginal_rejects_bad_std():
    with pytest.raises(ex.ParameterOutOfRange):
        GaussianMarginal(0.0, 0.0)


def test_gaussian_support_carries_requested_mass():
    m = GaussianMarginal(2.0, 3.0)
    lo, hi = m.support(1e-6)
    mass = float(m.cdf(hi) - m.cdf(lo))
    assert mass >= 1.0 - 1e-6
    assert mass <= 1.0 - 1e-7  # not absurdly wide either


# ---------------------------------------------------------------------------
# product distribution: mass and sampling
# ---------------------------------------------------------------------------


def test_rect_mass_uniform_box_example():
    dist = ProductDistribution.uniform_box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    rect = HyperRectangle([0.0, 0.0, 0.0], [0.5, 0.5, 0.5])
    assert dist.rect_mass(rect) == pytest.approx(0.125, abs=1e-15)


def test_rect_mass_clips_to_support():
    dist = ProductDistribution.uniform_box([0.0], [1.0])
    rect = HyperRectangle([-5.0], [0.25])
    assert dist.rect_mass(rect) == pytest.approx(0.25, abs=1e-15)


def test_rect_mass_gaussian_matches_ndtr_product():
    dist = ProductDistribution.standard_gaussian(2)
    rect = HyperRectangle([-1.0, 0.0], [1.0, 2.0])
    want = (stats.norm.cdf(1) - stats.norm.cdf(-1)) * (
        stats.norm.cdf(2) - stats.norm.cdf(0)
    )
    assert dist.rect_mass(rect) == pytest.approx(want, rel=1e-12)


def test_conditional_sample_stays_inside_half_open_rect(rng):
    dist = ProductDistribution.standard_gaussian(3)
    rect = HyperRectangle([-0.5, 0.0, 1.0], [0.0, 0.5, 2.0])
    pts = dist.rect_conditional_sample(rect, 5000, rng)
    assert bool(np.all(rect.contains_batch(pts)))
    # the lo face is open: no sample may sit exactly on it
    assert np.all(pts > rect.lo)


def test_conditional_sample_law_is_truncated_marginal(rng):
    # 1-d gaussian conditioned on (0, 1]; compare with the truncated law by a
    # Kolmogorov-Smirnov test at a forgiving level (seeded, so deterministic).
    dist = ProductDistribution.standard_gaussian(1)
    rect = HyperRectangle([0.0], [1.0])
    pts = dist.rect_conditional_sample(rect, 20_000, rng)[:, 0]
    ks = stats.kstest(pts, stats.truncnorm(0.0, 1.0).cdf)
    assert ks.pvalue > 1e-4


def test_conditional_sample_zero_mass_axis_raises(rng):
    dist = ProductDistribution.uniform_box([0.0], [1.0])
    rect = HyperRectangle([2.0], [3.0])  # outside the support entirely
    with pytest.raises(ex.RegionMassZero):
        dist.rect_conditional_sample(rect, 10, rng)


def test_axis_median_splits_mass_in_half():
    dist = ProductDistribution.standard_gaussian(2)
    rect = HyperRectangle([-1.0, 0.0], [2.0, 3.0])
    for axis in (0, 1):
        med = dist.axis_median(rect, axis)
        hi = rect.hi.copy()
        hi[axis] = med
        lo_half = HyperRectangle(rect.lo, hi)
        assert dist.rect_mass(lo_half) == pytest.approx(
            0.5 * dist.rect_mass(rect), rel=1e-12
        )


def test_axis_median_zero_mass_raises():
    dist = ProductDistribution.uniform_box([0.0], [1.0])
    rect = HyperRectangle([2.0], [3.0])
    with pytest.raises(ex.ZeroMassRectangle):
        dist.axis_median(rect, 0)


def test_support_box_mass_and_shape():
    dist = ProductDistribution.standard_gaussian(4)
    box = dist.support_box(tail=1e-9)
    assert box.dim == 4
    # one ulp of slack: the per-axis tails are computed in floating point
    assert dist.rect_mass(box) >= 1.0 - 1.01e-9


def test_uniform_support_box_is_exact():
    dist = ProductDistribution.uniform_box([0.0, -1.0], [1.0, 1.0])
    box = dist.support_box()
    assert np.allclose(box.lo, [0.0, -1.0])
    assert np.allclose(box.hi, [1.0, 1.0])


# ---------------------------------------------------------------------------
# spec round trips
# ---------------------------------------------------------------------------


def test_marginal_spec_round_trip():
    for m in (UniformMarginal(0.0, 2.0), GaussianMarginal(-1.0, 0.25)):
        again = marginal_from_spec(m.to_spec())
        assert again == m


def test_distribution_spec_round_trip(rng):
    dist = ProductDistribution(
        [UniformMarginal(0.0, 1.0), GaussianMarginal(0.5, 2.0)]
    )
    again = distribution_from_spec(dist.to_spec())
    rect = HyperRectangle([0.25, -1.0], [0.75, 1.0])
    assert again.rect_mass(rect) == pytest.approx(dist.rect_mass(rect), rel=0)
    # same spec -> same sampling law under the same seed
    a = dist.sample_batch(16, np.random.default_rng(7))
    b = again.sample_batch(16, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_bad_specs_raise_config_invalid():
    with pytest.raises(ex.ConfigInvalid):
        marginal_from_spec({"kind": "cauchy"})
    with pytest.raises(ex.ConfigInvalid):
        distribution_from_spec({"kind": "mixture"})


# ---------------------------------------------------------------------------
# sphere sampling
# ---------------------------------------------------------------------------


def test_sphere_samples_have_unit_norm(rng):
    pts = sample_uniform_sphere(4000, 5, rng)
    assert pts.shape == (4000, 5)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


def test_sphere_samples_respect_radius(rng):
    pts = sample_uniform_sphere(100, 3, rng, radius=2.5)
    assert np.allclose(np.linalg.norm(pts, axis=1), 2.5, atol=1e-12)


def test_sphere_first_coordinate_law(rng):
    # On S^{d-1} with d = 3 each coordinate is uniform on [-1, 1] (Archimedes).
    pts = sample_uniform_sphere(20_000, 3, rng)
    ks = stats.kstest(pts[:, 0], stats.uniform(loc=-1.0, scale=2.0).cdf)
    assert ks.pvalue > 1e-4


def test_sphere_rejects_bad_dim(rng):
    with pytest.raises(ex.ParameterOutOfRange):
        sample_uniform_sphere(4, 0, rng)
