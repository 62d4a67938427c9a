"""The explainability-loss auditor and its sample-size characterization.

``simple_audit`` estimates the fraction of anchors whose local explanation
is bad: it spends the first m labeled points as anchors, then validates
each anchor's region against the remaining points.  An anchor whose region
captured at least k validation points gets an empirical local loss; it
counts red when that loss strictly exceeds gamma, blue otherwise (ties are
blue), and the estimate is red / (red + blue).  Anchors sharing an
identical (region, local rule) pair are validated once.

The target is interval-valued because gamma itself is only resolved to a
factor (1 +- eps1): a correct answer lands in

    [ L_{gamma*(1+eps1)} - eps2 ,  L_{gamma*(1-eps1)} + eps2 ]  clipped to [0, 1].

Sample sizes: the anchor and validation counts below make simple_audit land
in that interval with probability 1 - delta whenever every region carries
mass at least lam (upper_bound_samples).  Conversely no auditor, of any
design, can do the same with fewer than lower_bound_samples points in the
worst case; the adversary module realizes that hard case.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LocalExplanation
from .errors import (
    InsufficientCoverage,
    InsufficientData,
    OracleUnavailable,
    ParameterOutOfRange,
)

# per-anchor outcome codes used in reports
RED, BLUE, SKIPPED = 1, 0, -1
_OUTCOME_NAMES = {RED: "red", BLUE: "blue", SKIPPED: "skipped"}


@dataclass(frozen=True)
class AuditorConfig:
    """Audit resolution parameters.

    gamma: local-loss threshold separating good from bad explanations.
    eps1:  multiplicative blur tolerated on gamma.
    eps2:  additive error tolerated on the explainability loss itself.
    delta: failure probability budget.
    """

    gamma: float
    eps1: float
    eps2: float
    delta: float

    def __post_init__(self):
        for name in ("gamma", "eps1", "eps2", "delta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 < v < 1.0):
                raise ParameterOutOfRange(f"{name} must lie in (0, 1); got {v!r}")
        if not self.gamma * (1.0 + self.eps1) < 1.0:
            raise ParameterOutOfRange("need gamma * (1 + eps1) < 1")

    def window(self):
        """The blurred threshold pair (gamma*(1-eps1), gamma*(1+eps1))."""
        return self.gamma * (1.0 - self.eps1), self.gamma * (1.0 + self.eps1)


def audit_sample_sizes(cfg: AuditorConfig):
    """(m, k): anchor count and per-region validation count.

        m = ceil((61 / eps2^2) * ln(12 / delta))
        k = ceil(ln(176 / (eps2 * delta)) / (2 * gamma^2 * eps1^2))
    """
    m = math.ceil((61.0 / cfg.eps2**2) * math.log(12.0 / cfg.delta))
    k = math.ceil(
        math.log(176.0 / (cfg.eps2 * cfg.delta)) / (2.0 * cfg.gamma**2 * cfg.eps1**2)
    )
    return m, k


@dataclass(frozen=True)
class AuditInput:
    """A labeled sample with one explanation per point.

    ``explanations[i]`` must be anchored at ``points[i]``.  Checking that
    exactly is O(n d); construction verifies all anchors for small inputs
    and a fixed spot-check pattern for large ones (tests exercise the full
    invariant via ``validate``).
    """

    points: np.ndarray
    labels: np.ndarray
    explanations: Sequence[LocalExplanation]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        labs = np.asarray(self.labels)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labs)
        if pts.ndim != 2:
            raise ParameterOutOfRange("points must be an (n, d) array")
        n = pts.shape[0]
        if labs.shape != (n,) or len(self.explanations) != n:
            raise ParameterOutOfRange(
                "points, labels and explanations must have equal length"
            )
        if n and not np.all(np.isin(labs, (-1, 1))):
            raise ParameterOutOfRange("labels must be +1 or -1")
        if n <= 4096:
            self.validate()
        else:
            step = max(n // 64, 1)
            for i in range(0, n, step):
                self._check_anchor(i)

    def _check_anchor(self, i):
        if not np.array_equal(self.explanations[i].anchor, self.points[i]):
            raise ParameterOutOfRange(
                f"explanation {i} is anchored away from its point"
            )

    def validate(self):
        for i in range(self.points.shape[0]):
            self._check_anchor(i)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class AuditReport:
    """Outcome of one audit, with per-anchor diagnostics.

    ``anchor_outcome`` uses codes +1 red, 0 blue, -1 skipped;
    ``anchor_loss`` is NaN for skipped anchors.
    """

    estimate: float
    n_red: int
    n_blue: int
    n_validated: int
    n_skipped: int
    m: int
    k: int
    config: AuditorConfig
    anchor_outcome: np.ndarray
    anchor_loss: np.ndarray
    anchor_region_points: np.ndarray

    def to_record(self):
        per_anchor = []
        for i in range(self.anchor_outcome.size):
            loss = float(self.anchor_loss[i])
            per_anchor.append(
                {
                    "anchor_index": i,
                    "region_points": int(self.anchor_region_points[i]),
                    "empirical_loss": None if math.isnan(loss) else loss,
                    "counted_as": _OUTCOME_NAMES[int(self.anchor_outcome[i])],
                }
            )
        return {
            "version": 1,
            "kind": "audit_report",
            "estimate": self.estimate,
            "m": self.m,
            "k": self.k,
            "n_red": self.n_red,
            "n_blue": self.n_blue,
            "n_validated": self.n_validated,
            "n_skipped": self.n_skipped,
            "config": {
                "gamma": self.config.gamma,
                "eps1": self.config.eps1,
                "eps2": self.config.eps2,
                "delta": self.config.delta,
            },
            "per_anchor": per_anchor,
        }

    @classmethod
    def from_record(cls, rec):
        from .errors import RecordUnreadable

        if not isinstance(rec, dict) or rec.get("kind") != "audit_report":
            raise RecordUnreadable("not an audit report record")
        if rec.get("version") != 1:
            raise RecordUnreadable(
                f"unsupported audit report version {rec.get('version')!r}"
            )
        try:
            cfg = AuditorConfig(**rec["config"])
            per_anchor = rec["per_anchor"]
            codes = {name: code for code, name in _OUTCOME_NAMES.items()}
            outcome = np.empty(len(per_anchor), dtype=np.int8)
            loss = np.full(len(per_anchor), math.nan)
            pts = np.zeros(len(per_anchor), dtype=np.int64)
            for row in per_anchor:
                i = int(row["anchor_index"])
                outcome[i] = codes[row["counted_as"]]
                if row["empirical_loss"] is not None:
                    loss[i] = float(row["empirical_loss"])
                pts[i] = int(row["region_points"])
            return cls(
                estimate=float(rec["estimate"]),
                n_red=int(rec["n_red"]),
                n_blue=int(rec["n_blue"]),
                n_validated=int(rec["n_validated"]),
                n_skipped=int(rec["n_skipped"]),
                m=int(rec["m"]),
                k=int(rec["k"]),
                config=cfg,
                anchor_outcome=outcome,
                anchor_loss=loss,
                anchor_region_points=pts,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordUnreadable(f"malformed audit report record: {exc}") from exc


def simple_audit(inp: AuditInput, cfg: AuditorConfig) -> AuditReport:
    """Two-phase plug-in estimate of the explainability loss.

    Raises InsufficientData unless len(inp) > m, and InsufficientCoverage
    when no anchor's region captures k validation points.
    """
    m, k = audit_sample_sizes(cfg)
    n = len(inp)
    if n <= m:
        raise InsufficientData(
            f"audit needs more than m={m} labeled points, got {n}"
        )
    X2 = inp.points[m:]
    Y2 = np.asarray(inp.labels[m:], dtype=np.int8)

    outcome = np.empty(m, dtype=np.int8)
    loss = np.full(m, math.nan)
    region_points = np.zeros(m, dtype=np.int64)

    groups = {}
    for i in range(m):
        e = inp.explanations[i]
        groups.setdefault((e.region, e.local), []).append(i)

    for (region, local), members in groups.items():
        mask = region.contains_batch(X2)
        cnt = int(mask.sum())
        region_points[members] = cnt
        if cnt < k:
            outcome[members] = SKIPPED
            continue
        pred = local.predict_batch(X2[mask])
        lhat = float(np.mean(pred != Y2[mask]))
        loss[members] = lhat
        outcome[members] = RED if lhat > cfg.gamma else BLUE

    n_red = int(np.sum(outcome == RED))
    n_blue = int(np.sum(outcome == BLUE))
    if n_red + n_blue == 0:
        raise InsufficientCoverage(
            f"no anchor region captured the k={k} validation points required"
        )
    return AuditReport(
        estimate=n_red / (n_red + n_blue),
        n_red=n_red,
        n_blue=n_blue,
        n_validated=n_red + n_blue,
        n_skipped=m - n_red - n_blue,
        m=m,
        k=k,
        config=cfg,
        anchor_outcome=outcome,
        anchor_loss=loss,
        anchor_region_points=region_points,
    )


def accuracy_interval(cfg: AuditorConfig, exact_loss_oracle):
    """The interval a correct audit answer must land in, clipped to [0, 1].

    ``exact_loss_oracle(alpha)`` must return the exact explainability loss
    at threshold alpha.  The explainability loss is non-increasing in alpha,
    so the interval is never empty.
    """
    if exact_loss_oracle is None:
        raise OracleUnavailable("accuracy_interval needs an exact loss oracle")
    lo_t, hi_t = cfg.window()
    lo = max(0.0, float(exact_loss_oracle(hi_t)) - cfg.eps2)
    hi = min(1.0, float(exact_loss_oracle(lo_t)) + cfg.eps2)
    return lo, hi


def upper_bound_samples(cfg: AuditorConfig, lam) -> int:
    """Points sufficient for simple_audit on lam-local explainers.

        n = ceil( (61/eps2^2) ln(12/delta)
                  + ln(176/(eps2 delta)) / (2 lam gamma^2 eps1^2)
                    * ln( 44 ln(176/(eps2 delta)) / (eps2 delta gamma^2 eps1^2) ) )
    """
    if not 0.0 < lam <= 1.0:
        raise ParameterOutOfRange("lam must lie in (0, 1]")
    g2e2 = cfg.gamma**2 * cfg.eps1**2
    a = (61.0 / cfg.eps2**2) * math.log(12.0 / cfg.delta)
    inner = math.log(176.0 / (cfg.eps2 * cfg.delta))
    b = inner / (2.0 * lam * g2e2)
    c = math.log(44.0 * inner / (cfg.eps2 * cfg.delta * g2e2))
    return math.ceil(a + b * c)


def lower_bound_samples(cfg: AuditorConfig, lam) -> int:
    """Points below which every auditor fails on some lam-local instance.

        n = floor( 1 / (2592 * e * lam^(1 - 8 e) ) ),   e = max(eps1, eps2)

    Gates (each raises ParameterOutOfRange naming itself): eps1, eps2 < 1/48,
    gamma < 1/3, and lam < eps2^2.
    """
    e = max(cfg.eps1, cfg.eps2)
    if not (cfg.eps1 < 1.0 / 48.0 and cfg.eps2 < 1.0 / 48.0):
        raise ParameterOutOfRange("lower bound gate: eps1 and eps2 must be < 1/48")
    if not cfg.gamma < 1.0 / 3.0:
        raise ParameterOutOfRange("lower bound gate: gamma must be < 1/3")
    if not 0.0 < lam < cfg.eps2**2:
        raise ParameterOutOfRange("lower bound gate: lam must be in (0, eps2^2)")
    return math.floor(1.0 / (2592.0 * e * lam ** (1.0 - 8.0 * e)))


def coverage_samples(k, lam, delta, eps) -> int:
    """Validation points after which all mass->=lam regions hold k points.

        n' = ceil( (k / lam) * ln( 8k / (delta * eps) ) )

    with probability at least 1 - delta, uniformly over any set of at most
    1/eps regions considered by the audit.
    """
    if k < 1:
        raise ParameterOutOfRange("k must be >= 1")
    if not 0.0 < lam <= 1.0:
        raise ParameterOutOfRange("lam must lie in (0, 1]")
    for name, v in (("delta", delta), ("eps", eps)):
        if not 0.0 < v < 1.0:
            raise ParameterOutOfRange(f"{name} must lie in (0, 1)")
    return math.ceil((k / lam) * math.log(8.0 * k / (delta * eps)))
