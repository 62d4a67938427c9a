"""Sampling distributions with exact rectangle mass and conditional draws.

Product distributions are the workhorse: independent coordinates, each with
a closed-form CDF and quantile function.  That buys three exact operations
the estimators lean on:

* ``rect_mass``             product of per-axis CDF increments,
* ``rect_conditional_sample``  inverse-CDF draws restricted to ``(lo, hi]``,
* ``axis_median``           conditional median along one axis (used by the
                            median-split partition builder).

The three-spheres distribution lives in :mod:`explaudit.spheres` next to its
cap geometry; it satisfies the same oracle protocol.
"""

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.special import ndtr, ndtri

from .core import HyperRectangle, _check_dims
from .errors import ConfigInvalid, ParameterOutOfRange, RegionMassZero, ZeroMassRectangle


@runtime_checkable
class DistributionOracle(Protocol):
    """Minimum contract: a dimension and an i.i.d. batch sampler.

    Optional capabilities are discovered by attribute: ``rect_mass``,
    ``rect_conditional_sample``, ``ball_mass``, ``ball_conditional_sample``.
    """

    dim: int

    def sample_batch(self, n: int, rng: np.random.Generator) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformMarginal:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ParameterOutOfRange("uniform marginal needs finite lo < hi")

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def ppf(self, u):
        return self.lo + np.asarray(u, dtype=np.float64) * (self.hi - self.lo)

    def sample(self, n, rng):
        # hi - span * U[0,1) lands in (lo, hi], matching half-open cells
        return self.hi - (self.hi - self.lo) * rng.random(n)

    def support(self, tail):
        return self.lo, self.hi

    def to_spec(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class GaussianMarginal:
    mean: float
    std: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std) and self.std > 0):
            raise ParameterOutOfRange("gaussian marginal needs finite mean and std > 0")

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=np.float64) - self.mean) / self.std)

    def ppf(self, u):
        return self.mean + self.std * ndtri(np.asarray(u, dtype=np.float64))

    def sample(self, n, rng):
        return rng.normal(self.mean, self.std, n)

    def support(self, tail):
        # symmetric interval carrying all but `tail` of the mass
        half = self.std * float(-ndtri(tail / 2.0))
        return self.mean - half, self.mean + half

    def to_spec(self):
        return {"kind": "gaussian", "mean": self.mean, "std": self.std}


def marginal_from_spec(spec):
    kind = spec.get("kind")
    if kind == "uniform":
        return UniformMarginal(float(spec["lo"]), float(spec["hi"]))
    if kind == "gaussian":
        return GaussianMarginal(float(spec["mean"]), float(spec["std"]))
    raise ConfigInvalid(f"marginal kind {kind!r} is not one of: uniform, gaussian")


# ---------------------------------------------------------------------------
# product distribution
# ---------------------------------------------------------------------------


class ProductDistribution:
    """Independent coordinates, each a uniform or gaussian marginal."""

    def __init__(self, marginals):
        marginals = tuple(marginals)
        if not marginals:
            raise ParameterOutOfRange("need at least one marginal")
        self.marginals = marginals
        self.dim = len(marginals)

    @classmethod
    def uniform_box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        _check_dims(lo.size, hi.size, "uniform box bounds")
        return cls(UniformMarginal(float(a), float(b)) for a, b in zip(lo, hi))

    @classmethod
    def standard_gaussian(cls, dim):
        return cls(GaussianMarginal(0.0, 1.0) for _ in range(dim))

    def sample_batch(self, n, rng):
        cols = [m.sample(n, rng) for m in self.marginals]
        return np.stack(cols, axis=1)

    def cdf_point(self, x):
        x = np.asarray(x, dtype=np.float64)
        _check_dims(x.size, self.dim, "cdf_point")
        return np.array([float(m.cdf(x[i])) for i, m in enumerate(self.marginals)])

    def rect_mass(self, rect: HyperRectangle) -> float:
        _check_dims(rect.dim, self.dim, "rect_mass")
        mass = 1.0
        for i, m in enumerate(self.marginals):
            mass *= float(m.cdf(rect.hi[i])) - float(m.cdf(rect.lo[i]))
        return max(mass, 0.0)

    def rect_conditional_sample(self, rect, n, rng):
        """Exact draws from the conditional law on a positive-mass rectangle.

        Per axis: u uniform on (F(lo), F(hi)], mapped back through the
        quantile function.  A final clamp guards against the one-ulp
        rounding that can otherwise push a sample onto the open lo face.
        """
        _check_dims(rect.dim, self.dim, "rect_conditional_sample")
        cols = []
        for i, m in enumerate(self.marginals):
            flo = float(m.cdf(rect.lo[i]))
            fhi = float(m.cdf(rect.hi[i]))
            if not fhi > flo:
                raise RegionMassZero(
                    f"rectangle has zero mass along axis {i}; cannot condition"
                )
            u = fhi - (fhi - flo) * rng.random(n)
            x = m.ppf(u)
            lo_open = np.nextafter(rect.lo[i], rect.hi[i])
            cols.append(np.clip(x, lo_open, rect.hi[i]))
        return np.stack(cols, axis=1)

    def axis_median(self, rect, axis):
        """Conditional median of coordinate ``axis`` given the rectangle.

        For a product law this is the quantile at the midpoint of the CDF
        interval, so cutting there splits the rectangle's mass exactly in
        half.
        """
        m = self.marginals[axis]
        flo = float(m.cdf(rect.lo[axis]))
        fhi = float(m.cdf(rect.hi[axis]))
        if not fhi > flo:
            raise ZeroMassRectangle(f"zero mass along axis {axis}; no median")
        return float(m.ppf(0.5 * (flo + fhi)))

    def support_box(self, tail=1e-9) -> HyperRectangle:
        """A rectangle carrying at least ``1 - tail`` of the total mass."""
        per_axis = 1.0 - (1.0 - tail) ** (1.0 / self.dim)
        lows, highs = [], []
        for m in self.marginals:
            lo, hi = m.support(per_axis)
            lows.append(lo)
            highs.append(hi)
        return HyperRectangle(np.array(lows), np.array(highs))

    def to_spec(self):
        return {"kind": "product", "marginals": [m.to_spec() for m in self.marginals]}


def distribution_from_spec(spec):
    """Rebuild a distribution from its JSON-safe spec dict."""
    kind = spec.get("kind")
    if kind == "product":
        return ProductDistribution(marginal_from_spec(s) for s in spec["marginals"])
    if kind == "spheres":
        from .spheres import SpheresDistribution

        return SpheresDistribution(int(spec["dim"]))
    raise ConfigInvalid(f"distribution kind {kind!r} is not one of: product, spheres")


# ---------------------------------------------------------------------------
# sphere sampling
# ---------------------------------------------------------------------------


def sample_uniform_sphere(n, dim, rng, radius=1.0):
    """Uniform points on the radius-``radius`` sphere in ``dim`` dimensions.

    Gaussian normalization; resamples the (probability-zero) rows whose
    gaussian vector is too short to normalize stably.
    """
    if dim < 1:
        raise ParameterOutOfRange("sphere dimension must be >= 1")
    out = rng.standard_normal((n, dim))
    norms = np.linalg.norm(out, axis=1)
    bad = norms < 1e-12
    while np.any(bad):  # pragma: no cover - astronomically rare
        out[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms[bad] = np.linalg.norm(out[bad], axis=1)
        bad = norms < 1e-12
    return radius * out / norms[:, None]
