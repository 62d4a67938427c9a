"""Three concentric spheres: locality and loss cannot both be small.

The instance in dimension d puts mass 1/3 on each of three origin-centered
spheres with radii 1 - alpha, 1, and 1 + beta, where

    alpha = 1 / (3670016 * d^4),    beta = 1 / (3584 * d^2).

The target classifier separates them by squared norm: +1 inside
(||x||^2 <= 1 - alpha/2), -1 on the middle shell (||x||^2 <= 1 + beta/2),
+1 outside.  At the reference point x* = (1 + beta) * e_1 any ball/linear
explanation faces a dichotomy: either its ball has mass below 3^(1-d) or
its best linear rule disagrees with the target on at least 1/6 of the
ball's conditional mass.

Geometry runs through spherical caps.  Psi(theta, d) is the fraction of a
(d-1)-sphere's surface within angle theta of a fixed axis,

    Psi(theta, d) = I_{sin^2 theta}((d-1)/2, 1/2) / 2       for theta <= pi/2

mirrored above pi/2 (I is the regularized incomplete beta).  A ball B(a, r)
meets each sphere (radius s) in a cap of half-angle

    theta = arccos( (s^2 + ||a||^2 - r^2) / (2 s ||a||) )

clamped to empty/full when the cosine leaves [-1, 1], which makes ball
masses exact and lets the conditional law on a ball be sampled without
rejection: pick the sphere proportionally to its cap mass, draw the polar
angle by inverting Psi, and fill the orthogonal directions uniformly.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaincinv

from . import _kernels
from .core import Ball, LinearClassifier
from .distributions import sample_uniform_sphere
from .errors import DimensionMismatch, ParameterOutOfRange, ZeroMassBall

MIN_DIMENSION = 5


def psi(theta, d):
    """Normalized surface measure of a cap of half-angle theta, vectorized.

    Exact in terms of the regularized incomplete beta function; monotone
    from Psi(0) = 0 to Psi(pi) = 1 with Psi(pi/2) = 1/2.
    """
    if d < 2:
        raise ParameterOutOfRange("psi needs dimension >= 2")
    th = np.asarray(theta, dtype=np.float64)
    if np.any((th < -1e-12) | (th > math.pi + 1e-12)):
        raise ParameterOutOfRange("theta must lie in [0, pi]")
    th = np.clip(th, 0.0, math.pi)
    a = 0.5 * (d - 1)
    s2 = np.sin(th) ** 2
    low = 0.5 * betainc(a, 0.5, s2)
    out = np.where(th <= 0.5 * math.pi, low, 1.0 - low)
    return out if out.ndim else float(out)


def psi_inverse(w, d):
    """Angle with Psi(angle, d) = w; inverse of the cap CDF, vectorized."""
    w = np.asarray(w, dtype=np.float64)
    if np.any((w < 0.0) | (w > 1.0)):
        raise ParameterOutOfRange("w must lie in [0, 1]")
    a = 0.5 * (d - 1)
    lower = np.minimum(w, 1.0 - w)
    s2 = betaincinv(a, 0.5, np.clip(2.0 * lower, 0.0, 1.0))
    th = np.arcsin(np.sqrt(np.clip(s2, 0.0, 1.0)))
    out = np.where(w <= 0.5, th, math.pi - th)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SpheresInstance:
    """The hard instance in dimension d (d >= 5)."""

    d: int

    def __post_init__(self):
        if self.d < MIN_DIMENSION:
            raise ParameterOutOfRange(f"spheres instance needs d >= {MIN_DIMENSION}")

    @property
    def alpha(self):
        return 1.0 / (3670016.0 * self.d**4)

    @property
    def beta(self):
        return 1.0 / (3584.0 * self.d**2)

    @property
    def radii(self):
        return (1.0 - self.alpha, 1.0, 1.0 + self.beta)

    @property
    def x_star(self):
        v = np.zeros(self.d)
        v[0] = 1.0 + self.beta
        return v

    @property
    def mass_threshold(self):
        """The small-ball cutoff 3^(1-d) from the dichotomy."""
        return 3.0 ** (1 - self.d)


def f_spheres(instance, X):
    """Target labels on the three shells, by squared-norm thresholds."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != instance.d:
        raise DimensionMismatch(f"points are {X.shape[1]}-dimensional, instance is {instance.d}")
    n2 = np.einsum("ij,ij->i", X, X)
    out = np.where(
        n2 <= 1.0 - instance.alpha / 2.0,
        1,
        np.where(n2 <= 1.0 + instance.beta / 2.0, -1, 1),
    )
    return out.astype(np.int8)


class SpheresDistribution:
    """Uniform mixture of the three spheres; satisfies the oracle protocol
    with exact ball masses (no rectangle support)."""

    def __init__(self, d):
        self.instance = SpheresInstance(d)
        self.dim = d

    def sample_batch(self, n, rng):
        which = rng.integers(0, 3, size=n)
        pts = sample_uniform_sphere(n, self.dim, rng)
        scale = np.asarray(self.instance.radii)[which]
        return pts * scale[:, None]

    def ball_mass(self, ball):
        return ball_cap_decomposition(self.instance, ball).mass

    def ball_conditional_sample(self, ball, n, rng):
        return sample_in_ball(self.instance, ball, n, rng)

    def to_spec(self):
        return {"kind": "spheres", "dim": self.dim}


@dataclass(frozen=True)
class CapDecomposition:
    """Per-sphere cap half-angles of a ball, plus its exact total mass."""

    center_norm: float
    radius: float
    thetas: tuple          # one angle per sphere, 0 = misses, pi = swallows
    cap_fractions: tuple   # Psi(theta_i, d)
    mass: float


def ball_cap_decomposition(instance, ball):
    """Exact intersection structure of a ball with the three spheres."""
    if ball.dim != instance.d:
        raise DimensionMismatch("ball dimension does not match the instance")
    a = float(np.linalg.norm(ball.center))
    r = float(ball.radius)
    thetas = []
    for s in instance.radii:
        if a < 1e-300:
            thetas.append(math.pi if r >= s else 0.0)
            continue
        h = (s * s + a * a - r * r) / (2.0 * s * a)
        if h > 1.0:
            thetas.append(0.0)
        elif h < -1.0:
            thetas.append(math.pi)
        else:
            thetas.append(math.acos(h))
    fracs = tuple(float(psi(t, instance.d)) for t in thetas)
    return CapDecomposition(
        center_norm=a,
        radius=r,
        thetas=tuple(thetas),
        cap_fractions=fracs,
        mass=sum(fracs) / 3.0,
    )


def sample_in_ball(instance, ball, n, rng):
    """Exact draws from the mixture conditioned on the ball, no rejection.

    Sphere choice is multinomial in the cap masses; on each sphere the polar
    angle (from the ball-center axis) has CDF Psi(.)/Psi(theta_cap), inverted
    in closed form, and the orthogonal component is a uniform unit vector in
    the hyperplane normal to the axis.
    """
    dec = ball_cap_decomposition(instance, ball)
    total = sum(dec.cap_fractions)
    if total <= 0.0:
        raise ZeroMassBall("ball misses all three spheres")
    d = instance.d
    if dec.center_norm < 1e-300:
        axis = np.zeros(d)
        axis[0] = 1.0
    else:
        axis = np.asarray(ball.center, dtype=np.float64) / dec.center_norm
    weights = np.asarray(dec.cap_fractions) / total
    counts = rng.multinomial(n, weights)
    out = np.empty((n, d))
    row = 0
    for sphere, cnt in enumerate(counts):
        if cnt == 0:
            continue
        s = instance.radii[sphere]
        w = rng.random(cnt) * dec.cap_fractions[sphere]
        phi = psi_inverse(w, d)
        # orthogonal directions: gaussian, projected off the axis, normalized
        g = rng.standard_normal((cnt, d))
        g -= np.outer(g @ axis, axis)
        norms = np.linalg.norm(g, axis=1)
        tiny = norms < 1e-12
        while np.any(tiny):  # pragma: no cover - probability zero
            g[tiny] = rng.standard_normal((int(tiny.sum()), d))
            g[tiny] -= np.outer(g[tiny] @ axis, axis)
            norms[tiny] = np.linalg.norm(g[tiny], axis=1)
            tiny = norms < 1e-12
        g /= norms[:, None]
        out[row : row + cnt] = s * (
            np.cos(phi)[:, None] * axis + np.sin(phi)[:, None] * g
        )
        row += cnt
    # ball-conditional law is exchangeable across spheres; shuffle rows so
    # callers slicing prefixes see the mixture, not sphere blocks
    rng.shuffle(out, axis=0)
    return out


# ---------------------------------------------------------------------------
# best linear explanation on a ball
# ---------------------------------------------------------------------------


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _smoothed_descent(S, y, w, rng, anneal=(0.3, 0.1, 0.03), steps=40):
    """Minimize a sigmoid-smoothed 0-1 loss over unit w and offset b."""
    n = S.shape[0]
    b = float(np.median(S @ w))
    for h in anneal:
        lr = 0.5 * h
        for _ in range(steps):
            margin = (S @ w - b) * y
            sig = _sigmoid(-margin / h)
            coef = sig * (1.0 - sig) * (-y) / (h * n)
            grad_w = S.T @ coef
            grad_b = -float(np.sum(coef))
            w = w - lr * grad_w
            nw = np.linalg.norm(w)
            if nw < 1e-12:
                w = sample_uniform_sphere(1, S.shape[1], rng)[0]
                nw = 1.0
            w = w / nw
            b = b - lr * grad_b
    return w, b


def _zero_one(clf, S, y):
    return float(np.mean(clf.predict_batch(S) != y))


def best_linear_loss(
    instance,
    ball,
    rng,
    n_train=8000,
    n_holdout=20000,
    restarts=4,
):
    """Upper estimate of the best linear rule's conditional loss on a ball.

    Searches the threshold family along the ball-center axis exactly (the
    natural direction by symmetry), plus smoothed random restarts, each
    followed by an exact 1-d threshold sweep along its final direction.
    Candidates are compared on a fresh holdout draw so the returned loss is
    an honest estimate rather than a training-set artifact.

    Returns ``(loss, classifier)``.
    """
    S = sample_in_ball(instance, ball, n_train, rng)
    y = f_spheres(instance, S)
    S_hold = sample_in_ball(instance, ball, n_holdout, rng)
    y_hold = f_spheres(instance, S_hold)

    a = float(np.linalg.norm(ball.center))
    if a > 1e-300:
        axis = np.asarray(ball.center, dtype=np.float64) / a
    else:
        axis = np.zeros(instance.d)
        axis[0] = 1.0

    candidates = []

    def sweep_both(direction):
        for sgn in (1.0, -1.0):
            wdir = sgn * direction
            _, b = _kernels.sweep_threshold(S @ wdir, y)
            candidates.append(LinearClassifier(wdir, b))

    sweep_both(axis)
    for _ in range(restarts):
        w0 = sample_uniform_sphere(1, instance.d, rng)[0]
        w_fin, _ = _smoothed_descent(S, y, w0, rng)
        sweep_both(w_fin)

    best = min(candidates, key=lambda c: _zero_one(c, S_hold, y_hold))
    return _zero_one(best, S_hold, y_hold), best


# ---------------------------------------------------------------------------
# the scan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    d: int
    ball_center_norm: float
    radius: float
    theta1: float
    theta2: float
    theta3: float
    mass: float
    mass_threshold: float
    best_loss: float
    verdict: str

    def to_csv_row(self):
        return [
            self.d,
            repr(self.ball_center_norm),
            repr(self.radius),
            repr(self.theta1),
            repr(self.theta2),
            repr(self.theta3),
            repr(self.mass),
            repr(self.mass_threshold),
            repr(self.best_loss),
            self.verdict,
        ]


SCAN_CSV_HEADER = [
    "d",
    "ball_center_norm",
    "radius",
    "theta1",
    "theta2",
    "theta3",
    "mass",
    "mass_threshold",
    "best_loss",
    "verdict",
]


@dataclass(frozen=True)
class ScanReport:
    rows: tuple
    loss_floor: float        # 1/6 minus the slack actually used
    all_consistent: bool


def scan_balls(instance, rng, n_random=48, radius_range=(None, 2.5)):
    """Balls containing x*, mixing a fixed pair with a random sweep.

    Row 0 is the everything-ball (origin-centered, swallowing all spheres);
    row 1 is a sliver around x* touching only the outer sphere.  The rest
    draw a log-uniform radius and put the center at distance <= radius from
    x*, half the time along the x* axis, half in a random direction.
    """
    x_star = instance.x_star
    r_min = radius_range[0] if radius_range[0] is not None else instance.beta / 4.0
    r_max = radius_range[1]
    balls = [
        Ball(np.zeros(instance.d), 2.0 + instance.beta),
        Ball(x_star, instance.beta / 8.0),
    ]
    for _ in range(n_random):
        r = math.exp(rng.uniform(math.log(r_min), math.log(r_max)))
        rho = r * rng.random()
        if rng.random() < 0.5:
            direction = x_star / np.linalg.norm(x_star)
        else:
            direction = sample_uniform_sphere(1, instance.d, rng)[0]
        balls.append(Ball(x_star - rho * direction, r))
    return balls


def theorem3_scan(
    d,
    rng,
    n_random=48,
    slack=0.02,
    n_train=8000,
    n_holdout=20000,
    restarts=4,
):
    """Empirical sweep of the locality/loss dichotomy in dimension d.

    Every scanned ball must be consistent with: mass below 3^(1-d) (small
    ball), or measured best linear loss at least 1/6 - slack.  The slack
    absorbs Monte Carlo error on the loss side only; masses are exact.
    """
    instance = SpheresInstance(d)
    floor = 1.0 / 6.0 - slack
    rows = []
    for ball in scan_balls(instance, rng, n_random=n_random):
        dec = ball_cap_decomposition(instance, ball)
        if dec.mass > 0.0:
            loss, _ = best_linear_loss(
                instance, ball, rng,
                n_train=n_train, n_holdout=n_holdout, restarts=restarts,
            )
        else:
            loss = 0.0
        small = dec.mass < instance.mass_threshold
        ok = small or loss >= floor
        rows.append(
            ScanRow(
                d=d,
                ball_center_norm=dec.center_norm,
                radius=dec.radius,
                theta1=dec.thetas[0],
                theta2=dec.thetas[1],
                theta3=dec.thetas[2],
                mass=dec.mass,
                mass_threshold=instance.mass_threshold,
                best_loss=loss,
                verdict="consistent" if ok else "violation",
            )
        )
    return ScanReport(
        rows=tuple(rows),
        loss_floor=floor,
        all_consistent=all(r.verdict == "consistent" for r in rows),
    )
