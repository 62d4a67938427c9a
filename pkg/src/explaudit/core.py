"""Core types and measures for local explanations.

An explanation of a classifier ``f`` at a point ``x`` is a pair: a region
``R`` containing ``x`` and a simple local classifier ``g`` meant to mimic
``f`` inside ``R``.  Two families are supported:

* axis-aligned half-open rectangles ``(a_i, b_i]`` paired with constant
  labels, and
* Euclidean balls paired with unit-normal linear classifiers
  (``+1`` iff ``<w, z> >= b``, ties resolved to ``+1``).

The quality measures all condition on the region:

* local loss      ``Pr[g(x') != f(x') | x' in R]``
* explainability  ``Pr_x[ local loss at x >= gamma ]``
* local mass      ``Pr[x' in R]``
* locality        smallest local mass over sampled anchors.

Monte Carlo estimates carry a standard error; mass computations go through
the distribution's closed form whenever one is available.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Union, runtime_checkable

import numpy as np

from .errors import DimensionMismatch, ParameterOutOfRange, RegionMassZero

Label = int  # +1 or -1
UNIT_NORM_TOL = 1e-12


def _as_vector(x, name="point"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ParameterOutOfRange(f"{name} must be a 1-d, non-empty coordinate array")
    if not np.all(np.isfinite(v)):
        raise ParameterOutOfRange(f"{name} has non-finite coordinates")
    v = v.copy()
    v.flags.writeable = False
    return v


def _check_dims(a, b, what):
    if a != b:
        raise DimensionMismatch(f"{what}: dimension {a} vs {b}")


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HyperRectangle:
    """Axis-aligned product of half-open intervals ``(lo_i, hi_i]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vector(self.lo, "lo"))
        object.__setattr__(self, "hi", _as_vector(self.hi, "hi"))
        _check_dims(self.lo.size, self.hi.size, "rectangle bounds")
        if not np.all(self.lo < self.hi):
            raise ParameterOutOfRange("rectangle needs lo < hi on every axis")

    @property
    def dim(self):
        return self.lo.size

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        _check_dims(x.size, self.dim, "point in rectangle")
        return bool(np.all((self.lo < x) & (x <= self.hi)))

    def contains_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        _check_dims(X.shape[1], self.dim, "points in rectangle")
        return np.all((self.lo < X) & (X <= self.hi), axis=1)

    # tobytes-based identity so identical regions dedup in dict/set keys
    def __eq__(self, other):
        if not isinstance(other, HyperRectangle):
            return NotImplemented
        return (
            self.lo.tobytes() == other.lo.tobytes()
            and self.hi.tobytes() == other.hi.tobytes()
        )

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))


@dataclass(frozen=True, eq=False)
class Ball:
    """Closed Euclidean ball ``{x : ||x - center||_2 <= radius}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vector(self.center, "center"))
        r = float(self.radius)
        if not (math.isfinite(r) and r >= 0.0):
            raise ParameterOutOfRange("ball radius must be finite and >= 0")
        object.__setattr__(self, "radius", r)

    @property
    def dim(self):
        return self.center.size

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        _check_dims(x.size, self.dim, "point in ball")
        return bool(np.linalg.norm(x - self.center) <= self.radius)

    def contains_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        _check_dims(X.shape[1], self.dim, "points in ball")
        d = X - self.center
        return np.einsum("ij,ij->i", d, d) <= self.radius * self.radius

    def __eq__(self, other):
        if not isinstance(other, Ball):
            return NotImplemented
        return self.radius == other.radius and self.center.tobytes() == other.center.tobytes()

    def __hash__(self):
        return hash((self.center.tobytes(), self.radius))


Region = Union[HyperRectangle, Ball]


# ---------------------------------------------------------------------------
# local classifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantClassifier:
    label: Label

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ParameterOutOfRange("constant label must be +1 or -1")

    def predict(self, x):
        return self.label

    def predict_batch(self, X):
        return np.full(np.asarray(X).shape[0], self.label, dtype=np.int8)


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Halfspace rule: ``+1`` iff ``<w, x> >= b`` with ``||w||_2 = 1``."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "w", _as_vector(self.w, "w"))
        object.__setattr__(self, "b", float(self.b))
        if abs(np.linalg.norm(self.w) - 1.0) > UNIT_NORM_TOL:
            raise ParameterOutOfRange("linear weight vector must have unit 2-norm")

    @property
    def dim(self):
        return self.w.size

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        _check_dims(x.size, self.dim, "linear prediction")
        return 1 if float(self.w @ x) >= self.b else -1

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        _check_dims(X.shape[1], self.dim, "linear prediction")
        return np.where(X @ self.w >= self.b, 1, -1).astype(np.int8)

    def __eq__(self, other):
        if not isinstance(other, LinearClassifier):
            return NotImplemented
        return self.b == other.b and self.w.tobytes() == other.w.tobytes()

    def __hash__(self):
        return hash((self.w.tobytes(), self.b))


LocalClassifier = Union[ConstantClassifier, LinearClassifier]


@dataclass(frozen=True)
class LocalExplanation:
    """Anchor point, its region, and the local rule claimed to hold there."""

    anchor: np.ndarray
    region: Region
    local: LocalClassifier

    def __post_init__(self):
        object.__setattr__(self, "anchor", _as_vector(self.anchor, "anchor"))
        _check_dims(self.anchor.size, self.region.dim, "explanation anchor/region")
        if isinstance(self.local, LinearClassifier):
            _check_dims(self.local.dim, self.region.dim, "explanation local/region")
        if not self.region.contains(self.anchor):
            raise ParameterOutOfRange("explanation anchor lies outside its region")

    @classmethod
    def batch(cls, anchors, region, local):
        """Explanations sharing one (region, local) pair, validated in bulk.

        Semantically identical to a list comprehension over the rows, but the
        containment check runs once over the whole anchor array; per-object
        revalidation is skipped, which matters when explainers answer tens of
        thousands of queries per trial.
        """
        A = np.asarray(anchors, dtype=np.float64)
        if A.ndim != 2:
            raise ParameterOutOfRange("anchors must be an (n, d) array")
        if not np.all(np.isfinite(A)):
            raise ParameterOutOfRange("anchors must be finite")
        _check_dims(A.shape[1], region.dim, "explanation anchor/region")
        if isinstance(local, LinearClassifier):
            _check_dims(local.dim, region.dim, "explanation local/region")
        inside = region.contains_batch(A)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise ParameterOutOfRange(
                f"explanation anchor {bad} lies outside its region"
            )
        A = A.copy()
        A.setflags(write=False)
        out = []
        for row in A:
            e = object.__new__(cls)
            object.__setattr__(e, "anchor", row)
            object.__setattr__(e, "region", region)
            object.__setattr__(e, "local", local)
            out.append(e)
        return out


# ---------------------------------------------------------------------------
# classifier / explainer protocols
# ---------------------------------------------------------------------------

# A classifier is any callable mapping an (n, d) array to an (n,) array of
# +1/-1 labels.  Single-point queries go through f(x[None, :])[0].
Classifier = Callable[[np.ndarray], np.ndarray]


@runtime_checkable
class Explainer(Protocol):
    # tags: "rect_constant", "ball_linear", or "other"
    class_tag: str

    def explain(self, f: Classifier, x: np.ndarray) -> LocalExplanation: ...


# ---------------------------------------------------------------------------
# estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossEstimate:
    value: float
    stderr: float
    samples_used: int
    # per-anchor local losses, populated by explainability_loss diagnostics
    per_anchor: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class MassEstimate:
    value: float
    stderr: float
    exact: bool


def _binom_stderr(p, n):
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n > 0 else float("inf")


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

_REJECTION_BUDGET = 2_000_000


def _sample_in_region(region, dist, n, rng):
    """n conditional samples from dist restricted to region.

    Uses the distribution's exact conditional sampler for rectangles when it
    has one, otherwise falls back to rejection with a fixed attempt budget.
    """
    sampler = getattr(dist, "rect_conditional_sample", None)
    if isinstance(region, HyperRectangle) and sampler is not None:
        return sampler(region, n, rng)
    sampler = getattr(dist, "ball_conditional_sample", None)
    if isinstance(region, Ball) and sampler is not None:
        return sampler(region, n, rng)

    got = []
    have = 0
    spent = 0
    while have < n:
        batch = max(n - have, 1) * 4
        if spent + batch > _REJECTION_BUDGET:
            batch = _REJECTION_BUDGET - spent
            if batch <= 0:
                raise RegionMassZero(
                    f"no usable region mass after {_REJECTION_BUDGET} proposals"
                )
        pts = dist.sample_batch(batch, rng)
        spent += batch
        keep = pts[region.contains_batch(pts)]
        if keep.shape[0]:
            got.append(keep)
            have += keep.shape[0]
    return np.concatenate(got, axis=0)[:n]


def local_loss(explanation, f, dist, n_inner, rng):
    """Monte Carlo estimate of Pr[g(x') != f(x') | x' in region]."""
    if n_inner < 1:
        raise ParameterOutOfRange("n_inner must be >= 1")
    _check_dims(explanation.region.dim, dist.dim, "explanation vs distribution")
    pts = _sample_in_region(explanation.region, dist, n_inner, rng)
    disagree = explanation.local.predict_batch(pts) != np.asarray(f(pts), dtype=np.int8)
    v = float(np.mean(disagree))
    return LossEstimate(value=v, stderr=_binom_stderr(v, n_inner), samples_used=n_inner)


def explainability_loss(explainer, f, dist, gamma, n_outer, n_inner, rng):
    """Fraction of anchors whose estimated local loss reaches ``gamma``.

    The threshold comparison is inclusive: an anchor counts when its local
    loss estimate is >= gamma.  Anchors whose region cannot be sampled
    (vanishing mass) count as failures and surface in ``per_anchor`` as 1.0.
    """
    if not 0.0 < gamma <= 1.0:
        raise ParameterOutOfRange("gamma must lie in (0, 1]")
    anchors = dist.sample_batch(n_outer, rng)
    losses = []
    bad = 0
    for i in range(n_outer):
        expl = explainer.explain(f, anchors[i])
        try:
            est = local_loss(expl, f, dist, n_inner, rng)
            losses.append(est.value)
        except RegionMassZero:
            losses.append(1.0)
        bad += losses[-1] >= gamma
    v = bad / n_outer
    return LossEstimate(
        value=v,
        stderr=_binom_stderr(v, n_outer),
        samples_used=n_outer,
        per_anchor=tuple(losses),
    )


def local_mass(region, dist, n_mc=0, rng=None):
    """Probability mass of a region; exact when the distribution can say.

    Monte Carlo fallback needs ``n_mc > 0`` and an rng.
    """
    _check_dims(region.dim, dist.dim, "region vs distribution")
    if isinstance(region, HyperRectangle):
        exact = getattr(dist, "rect_mass", None)
        if exact is not None:
            return MassEstimate(value=float(exact(region)), stderr=0.0, exact=True)
    if isinstance(region, Ball):
        exact = getattr(dist, "ball_mass", None)
        if exact is not None:
            return MassEstimate(value=float(exact(region)), stderr=0.0, exact=True)
    if n_mc < 1 or rng is None:
        raise ParameterOutOfRange(
            "distribution has no closed-form mass for this region; "
            "pass n_mc >= 1 and an rng for a Monte Carlo estimate"
        )
    pts = dist.sample_batch(n_mc, rng)
    v = float(np.mean(region.contains_batch(pts)))
    return MassEstimate(value=v, stderr=_binom_stderr(v, n_mc), exact=False)


def locality(explainer, f, dist, n_outer, rng, n_mc=0):
    """Smallest region mass among explanations at ``n_outer`` sampled anchors.

    This is a sample minimum, hence an upper estimate of the explainer's
    true locality (the infimum over all anchors); it never certifies a
    lower bound.
    """
    anchors = dist.sample_batch(n_outer, rng)
    best = math.inf
    for i in range(n_outer):
        expl = explainer.explain(f, anchors[i])
        est = local_mass(expl.region, dist, n_mc=n_mc, rng=rng)
        best = min(best, est.value)
    return float(best)


def as_batch_classifier(pointwise: Callable[[np.ndarray], Label]) -> Classifier:
    """Lift a single-point labeling function to the batch calling convention."""

    def f(X):
        X = np.asarray(X, dtype=np.float64)
        return np.fromiter((pointwise(row) for row in X), dtype=np.int8, count=X.shape[0])

    return f
