"""Moment-matched probability vectors for the indistinguishability bound.

Construction sketch.  Fix l >= 1 and let P(x) = prod_{odd j <= 4l-1} (x^2 - j^2),
a monic even polynomial of degree 4l whose roots are the odd integers
+-1, +-3, ..., +-(4l-1).  Subtracting the constant term gives
Q(x) = P(x) - P(0), which keeps every polynomial coefficient except the
constant one, so by Newton's identities the power sums of the roots of P and
Q agree for every exponent t <= 4l - 1 and differ at t = 4l by exactly
4l * P(0).

Q's roots are explicit enough to trap: a double root at 0, plus simple roots
in (4i-1, 4i) and (4i, 4i+1) for i = 1..l-1 and one in (4l-1, 4l), mirrored
negatively.  With m = 2l, the two offset multisets (P-roots and Q-roots) are
pushed through the affine map rho -> gamma*(1 + 2*eps1) + 2*gamma*eps * rho
with eps = 1/(8l), yielding probability vectors p and q in (0, 1) whose
first 2m - 1 moments agree while p places exactly m values above the audit
window [gamma*(1-eps1), gamma*(1+eps1)] and q places m + 1 there.  Nothing
lands inside the window: eps > 2*eps1 keeps the nearest offsets clear of it.

Root finding works on D(x) = log P(x) - log P(0), whose zeros inside a
bracket coincide with Q's (P is positive there).  Bisection runs on the sign
of D with an exact big-integer rescue when the float value is inside the
noise floor, then a few Newton steps in double precision, then a high
precision polish with mpmath so the t = 2m power-sum gap can actually be
measured against its algebraic value instead of drowning in conditioning.
"""

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .errors import ExplauditError, ParameterOutOfRange

GAMMA_SOFT_LIMIT = 1.0 / 48.0
EPS_HARD_LIMIT = 1.0 / 48.0


def _odd_js(l):
    return range(1, 4 * l, 2)


def p0_exact(l):
    """P(0) = (1 * 3 * ... * (4l-1))^2 as an exact integer."""
    return math.prod(_odd_js(l)) ** 2


def sign_Q_exact(x, l):
    """Exact sign of Q(x) = P(x) - P(0) at a float x (floats are dyadic)."""
    fx = Fraction(x)
    prod = Fraction(1)
    for j in _odd_js(l):
        prod *= fx * fx - j * j
    diff = prod - p0_exact(l)
    return (diff > 0) - (diff < 0)


def working_dps(l, extra=40):
    """Precision needed to resolve Q_l's roots and the t = 2m gap.

    The gap's condition number is about (4l)^(4l-1): the extreme roots sit
    within P(0)/P'(4l-1) of the odd endpoints, which dips below double
    resolution already at moderate l.
    """
    return int(math.ceil(4 * l * math.log10(4 * l))) + extra


def _Q_mp(x, l, p0):
    prod = mpmath.mpf(1)
    for j in _odd_js(l):
        prod *= (x - j) * (x + j)
    return prod - p0


def _find_root_mp(a, b, l, p0, dps):
    """The single root of Q_l inside (a, b), one endpoint odd (a P-root).

    Bisection is run far enough to enter the linear zone around the root
    (which can hug the odd endpoint extremely closely), then Newton
    finishes.  All arithmetic is mpf at ``dps`` digits.
    """
    lo = mpmath.mpf(a)
    hi = mpmath.mpf(b)
    sign_lo = -1 if a % 4 != 0 else +1  # odd endpoint: Q = -P(0); even: Q > 0
    # endpoints themselves: odd one is a P-root (Q < 0 just inside), even one
    # has Q > 0 (checked below rather than assumed)
    even_end = a if a % 4 == 0 else b
    if not _Q_mp(mpmath.mpf(even_end), l, p0) > 0:
        raise ExplauditError(f"expected Q_{l}({even_end}) > 0; bracket table is wrong")
    for _ in range(80):
        mid = (lo + hi) / 2
        qm = _Q_mp(mid, l, p0)
        s = 1 if qm > 0 else -1
        if s == sign_lo:
            lo = mid
        else:
            hi = mid
    x = (lo + hi) / 2
    tol = mpmath.mpf(10) ** (-(dps - 8))
    for _ in range(60):
        prod = mpmath.mpf(1)
        dsum = mpmath.mpf(0)
        for j in _odd_js(l):
            prod *= (x - j) * (x + j)
            dsum += 2 * x / ((x - j) * (x + j))
        q = prod - p0
        dq = prod * dsum
        if dq == 0:
            break
        step = q / dq
        x -= step
        if abs(step) < tol * max(1, abs(x)):
            break
    if not a < x < b:
        raise ExplauditError(f"root escaped its bracket ({a}, {b})")
    return x


def positive_q_offsets_mp(l, dps=None):
    """The 2l - 1 positive roots of Q_l, ascending, as mpf at ``dps`` digits."""
    if dps is None:
        dps = working_dps(l)
    p0 = p0_exact(l)
    brackets = []
    for i in range(1, l):
        brackets.append((4 * i - 1, 4 * i))
        brackets.append((4 * i, 4 * i + 1))
    brackets.append((4 * l - 1, 4 * l))
    with mpmath.workdps(dps):
        p0_mp = mpmath.mpf(p0)
        return [_find_root_mp(a, b, l, p0_mp, dps) for a, b in brackets]


def positive_q_offsets(l):
    """Double-precision views of Q_l's positive roots, ascending."""
    return np.array([float(x) for x in positive_q_offsets_mp(l)])


@dataclass(frozen=True)
class MomentMatchedProbs:
    """Two probability vectors of length 2m whose first 2m-1 moments agree.

    ``p`` and ``q`` are sorted ascending.  ``q`` has the doubled central
    value gamma*(1+2*eps1) at positions m-1 and m (0-based).  Exactly m of
    the p's and m+1 of the q's exceed gamma*(1+eps1); everything else sits
    below gamma*(1-eps1); no value lands inside the window.
    """

    m: int
    l: int
    eps: float
    gamma: float
    eps1: float
    p: np.ndarray
    q: np.ndarray
    p_offsets: np.ndarray    # odd integers +-1..+-(4l-1)
    q_offsets: np.ndarray    # +-roots of Q_l and the double zero
    # mpmath offsets kept for exact-ish verification; tuple of mpf
    q_offsets_mp: tuple

    @property
    def center(self):
        return self.gamma * (1.0 + 2.0 * self.eps1)

    @property
    def scale(self):
        return 2.0 * self.gamma * self.eps

    def above_window(self, values):
        return values > self.gamma * (1.0 + self.eps1)


def choose_l(eps1, eps2):
    """Largest integer l strictly below 1/(8*max(2*eps1, eps2))."""
    bound = 1.0 / (8.0 * max(2.0 * eps1, eps2))
    nearest = round(bound)
    if abs(bound - nearest) < 1e-9:
        l = nearest - 1
    else:
        l = math.floor(bound)
    # strictness belt-and-braces against float fuzz
    while l >= 1 and not 1.0 / (8.0 * l) > max(2.0 * eps1, eps2):
        l -= 1
    if l < 1:
        raise ParameterOutOfRange(
            "no admissible l: need max(2*eps1, eps2) < 1/8"
        )
    return l


def moment_system_for_l(l, gamma, eps1):
    """Build the length-4l system for an explicitly chosen l."""
    if l < 1:
        raise ParameterOutOfRange("l must be >= 1")
    if not 0.0 < gamma < 1.0 / 3.0:
        raise ParameterOutOfRange("gamma must lie in (0, 1/3)")
    if not 0.0 < eps1:
        raise ParameterOutOfRange("eps1 must be positive")
    eps = 1.0 / (8.0 * l)
    if not eps > 2.0 * eps1:
        raise ParameterOutOfRange(
            f"need eps = 1/(8l) > 2*eps1; got eps={eps}, eps1={eps1}"
        )
    if gamma >= GAMMA_SOFT_LIMIT:
        warnings.warn(
            "gamma >= 1/48: the construction is valid but separation margins "
            "get thin; sample-size formulas assume small gamma regimes",
            RuntimeWarning,
            stacklevel=2,
        )
    m = 2 * l
    pos_mp = positive_q_offsets_mp(l)
    pos = np.array([float(x) for x in pos_mp])
    p_off = np.array(
        [-(j) for j in reversed(list(_odd_js(l)))] + list(_odd_js(l)), dtype=np.float64
    )
    q_off = np.concatenate([-pos[::-1], [0.0, 0.0], pos])
    # negate inside a working-precision context: mpmath rounds every
    # arithmetic op (negation included) to the *current* precision, and the
    # ambient default would quietly truncate the roots to ~double
    with mpmath.workdps(working_dps(l)):
        q_off_mp = tuple(
            [-x for x in reversed(pos_mp)]
            + [mpmath.mpf(0), mpmath.mpf(0)]
            + list(pos_mp)
        )
    c = gamma * (1.0 + 2.0 * eps1)
    s = 2.0 * gamma * eps
    probs = MomentMatchedProbs(
        m=m,
        l=l,
        eps=eps,
        gamma=gamma,
        eps1=eps1,
        p=c + s * p_off,
        q=c + s * q_off,
        p_offsets=p_off,
        q_offsets=q_off,
        q_offsets_mp=q_off_mp,
    )
    return probs


def moment_matched_probs(gamma, eps1, eps2, verify=True):
    """Admissibility-gated construction used by the lower-bound experiments.

    Gates: gamma in (0, 1/3), eps1 and eps2 in (0, 1/48).  l is the largest
    integer with 1/(8l) strictly above max(2*eps1, eps2).
    """
    if not 0.0 < gamma < 1.0 / 3.0:
        raise ParameterOutOfRange("gamma must lie in (0, 1/3)")
    for name, v in (("eps1", eps1), ("eps2", eps2)):
        if not 0.0 < v < EPS_HARD_LIMIT:
            raise ParameterOutOfRange(f"{name} must lie in (0, 1/48); got {v}")
    l = choose_l(eps1, eps2)
    probs = moment_system_for_l(l, gamma, eps1)
    if verify:
        diag = verify_moment_system(probs)
        if not diag["ok"]:
            raise ExplauditError(
                f"moment system failed self-verification: {diag['failures']}"
            )
    return probs


def verify_moment_system(probs, rtol_match=1e-9, gap_rtol=1e-6, gap_floor=1e-3):
    """Check the defining conditions and measure the t = 2m gap.

    Returns a diagnostics dict with:

    * ``match_residuals``  relative power-sum residuals, t = 1 .. 2m-1
    * ``gap_measured``     sum(q_off^2m) - sum(p_off^2m), mpmath-measured
    * ``gap_exact``        2m * P(0), the algebraic value (int)
    * ``window``           counts of p/q above and below the gamma window
    * ``ok`` / ``failures``
    """
    m, l = probs.m, probs.l
    failures = []

    residuals = []
    for t in range(1, 2 * m):
        sp = math.fsum(float(v) ** t for v in probs.p)
        sq = math.fsum(float(v) ** t for v in probs.q)
        r = abs(sp - sq) / max(1.0, abs(sp))
        residuals.append(r)
        if r > rtol_match:
            failures.append(f"power sum mismatch at t={t}: rel {r:.3e}")

    lo_edge = probs.gamma * (1.0 - probs.eps1)
    hi_edge = probs.gamma * (1.0 + probs.eps1)
    p_above = int(np.sum(probs.p > hi_edge))
    p_below = int(np.sum(probs.p < lo_edge))
    q_above = int(np.sum(probs.q > hi_edge))
    q_below = int(np.sum(probs.q < lo_edge))
    if not (p_above == m and p_below == m):
        failures.append(f"p window split {p_below}/{p_above}, want {m}/{m}")
    if not (q_above == m + 1 and q_below == m - 1):
        failures.append(f"q window split {q_below}/{q_above}, want {m - 1}/{m + 1}")
    if not np.all((probs.p > 0) & (probs.p < 1) & (probs.q > 0) & (probs.q < 1)):
        failures.append("values escape (0, 1)")
    if not (np.all(np.diff(probs.p) > 0) and np.all(np.diff(probs.q) >= 0)):
        failures.append("p not strictly sorted or q not sorted")
    if not probs.q[m - 1] == probs.q[m] == probs.center:
        failures.append("central q values do not double at gamma*(1+2*eps1)")

    gap_exact = 2 * m * p0_exact(l)
    with mpmath.workdps(working_dps(l)):
        sq_mp = mpmath.fsum(x ** (2 * m) for x in probs.q_offsets_mp)
        sp_mp = mpmath.fsum(mpmath.mpf(int(o)) ** (2 * m) for o in probs.p_offsets)
        gap_measured = sq_mp - sp_mp
        rel = abs(gap_measured - gap_exact) / gap_exact
        degenerate = not gap_measured > gap_floor
        gap_measured_f = float(gap_measured) if gap_measured < mpmath.mpf(1e300) else math.inf
    if degenerate:
        failures.append(f"degenerate: 2m power-sum gap {gap_measured_f:.3e} <= {gap_floor}")
    if rel > gap_rtol:
        failures.append(f"2m gap off algebraic value by rel {float(rel):.3e}")

    return {
        "ok": not failures,
        "failures": failures,
        "match_residuals": np.array(residuals),
        "gap_measured": gap_measured_f,
        "gap_exact": gap_exact,
        "gap_rel_error": float(rel),
        "window": {
            "p_above": p_above,
            "p_below": p_below,
            "q_above": q_above,
            "q_below": q_below,
        },
    }
