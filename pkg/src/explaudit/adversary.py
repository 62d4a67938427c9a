"""Adversarial classifier pairs that no sample-starved auditor can tell apart.

The construction: partition the support into cells of mass about ``lam``,
subdivide each cell into ``N = 2**t`` equal-mass sub-cells, and label each
sub-cell of cell ``i`` independently ``-1`` with probability ``r[k_i]``,
where ``k_i`` is drawn uniformly from the 2m mixture components and ``r``
is either the ``p`` or the ``q`` vector of a moment-matched pair (the
hidden "world" bit).  Everything outside the support box is ``+1``.

Because p and q share their first 2m-1 moments, the label distribution a
sample induces inside any single cell is identical under both worlds until
the sample occupies at least 2m distinct sub-cells of that cell.  With cell
masses below 4*lam a small sample essentially never does, so the two worlds
are statistically indistinguishable, yet their exact explainability losses
differ by 1/(2m): p puts m of 2m values above the audit window, q puts m+1.

Sub-cell counts get astronomical (the concentration bound asks for 2**39
per cell); labels are therefore stored implicitly: a Binomial draw fixes
each cell's minus count up front and individual sub-cell labels materialize
lazily, by hypergeometric conditioning, only when a query point actually
lands there.  The joint law is exactly i.i.d. Bernoulli per sub-cell.
"""

import inspect
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .auditor import AuditInput, AuditorConfig, accuracy_interval, simple_audit
from .core import ConstantClassifier, LocalExplanation
from .errors import (
    InconsistentLabels,
    InsufficientCoverage,
    InsufficientData,
    OutsideLabelViolation,
    OutsideSupportError,
    ParameterOutOfRange,
)
from .moments import MomentMatchedProbs, moment_matched_probs
from .partition import PartitionSpec, build_partition

# explicit label storage above this many cells*subcells would thrash memory
EXPLICIT_LABEL_CAP = 1 << 22

DEFAULT_DELTA_C = 0.01


def choose_K(gamma, eps1, eps2, delta_c, n_cells):
    """Sub-cell count making discretized cell losses hug their r values.

    Each cell's loss is Binomial(N, r)/N.  Requiring, via Hoeffding plus a
    union bound over cells, that every deviation stays below one percent of
    gamma * min(eps1, eps2) with probability 1 - delta_c gives

        K >= ln(2 * n_cells / delta_c) / (2 * (0.01 * gamma * min(eps1, eps2))**2)
    """
    if delta_c <= 0 or delta_c >= 1:
        raise ParameterOutOfRange("delta_c must lie in (0, 1)")
    if n_cells < 1:
        raise ParameterOutOfRange("n_cells must be >= 1")
    slack = 0.01 * gamma * min(eps1, eps2)
    return int(math.ceil(math.log(2.0 * n_cells / delta_c) / (2.0 * slack * slack)))


# ---------------------------------------------------------------------------
# the hidden classifier
# ---------------------------------------------------------------------------


@dataclass
class FStarInstance:
    """One sampled classifier from the indistinguishable pair.

    ``world`` = 1 means the cell-level probabilities came from ``p``,
    0 means ``q``.  ``minus_counts[i]`` is the number of ``-1`` sub-cells in
    cell i (drawn up front); ``explicit_labels`` holds the full label table
    when it fits in memory, otherwise labels materialize lazily and are
    cached, so repeated queries of one point always agree.

    Lazy mode is deterministic for a fixed query sequence (the label stream
    is seeded), but not thread-safe.
    """

    partition: PartitionSpec
    probs: MomentMatchedProbs
    world: int
    k_idx: np.ndarray                      # (L,) in 1..2m
    minus_counts: np.ndarray               # (L,) int64
    explicit_labels: Optional[np.ndarray]  # (L, N) int8, or None
    label_seed: tuple                      # entropy ints for the lazy stream
    _label_rng: np.random.Generator = field(repr=False, default=None)
    _cache: dict = field(repr=False, default_factory=dict)
    _drawn_total: np.ndarray = field(repr=False, default=None)
    _drawn_minus: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        L = self.partition.n_cells
        if self._label_rng is None:
            self._label_rng = np.random.default_rng(
                np.random.SeedSequence(list(self.label_seed))
            )
        if self._drawn_total is None:
            self._drawn_total = np.zeros(L, dtype=np.int64)
            self._drawn_minus = np.zeros(L, dtype=np.int64)

    @property
    def r_values(self):
        return self.probs.p if self.world == 1 else self.probs.q

    @property
    def r_per_cell(self):
        return self.r_values[self.k_idx - 1]

    @property
    def n_subcells(self):
        return self.partition.n_subcells

    def _lazy_label(self, cell, sub):
        key = (int(cell), int(sub))
        got = self._cache.get(key)
        if got is not None:
            return got
        remaining = self.n_subcells - self._drawn_total[cell]
        remaining_minus = self.minus_counts[cell] - self._drawn_minus[cell]
        # urn draw: uniformly random undrawn sub-cell is a minus one with
        # probability remaining_minus / remaining
        lab = -1 if self._label_rng.random() * remaining < remaining_minus else 1
        self._drawn_total[cell] += 1
        self._drawn_minus[cell] += lab == -1
        self._cache[key] = lab
        return lab

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.ones(X.shape[0], dtype=np.int8)
        cell = self.partition.locate(X)
        inside = cell >= 0
        if not np.any(inside):
            return out
        sub = self.partition.subcell_index(X[inside], cell[inside])
        if self.explicit_labels is not None:
            out[inside] = self.explicit_labels[cell[inside], sub]
        else:
            inside_idx = np.flatnonzero(inside)
            cells_in = cell[inside]
            for pos in range(inside_idx.size):
                out[inside_idx[pos]] = self._lazy_label(cells_in[pos], sub[pos])
        return out

    def __call__(self, X):
        return self.predict_batch(X)

    def to_record(self):
        rec = {
            "version": 1,
            "kind": "fstar",
            "world": int(self.world),
            "partition": self.partition.to_record(),
            "probs": {
                "l": self.probs.l,
                "gamma": self.probs.gamma,
                "eps1": self.probs.eps1,
            },
            "k_idx": [int(v) for v in self.k_idx],
            "minus_counts": [int(v) for v in self.minus_counts],
            "label_seed": [int(v) for v in self.label_seed],
        }
        if self.explicit_labels is not None:
            rec["labels"] = [[int(v) for v in row] for row in self.explicit_labels]
        return rec

    @classmethod
    def from_record(cls, rec):
        from .errors import RecordUnreadable
        from .moments import moment_system_for_l

        if not isinstance(rec, dict) or rec.get("kind") != "fstar":
            raise RecordUnreadable("not an fstar record")
        if rec.get("version") != 1:
            raise RecordUnreadable(f"unsupported fstar record version {rec.get('version')!r}")
        partition = PartitionSpec.from_record(rec["partition"])
        probs = moment_system_for_l(
            int(rec["probs"]["l"]), float(rec["probs"]["gamma"]), float(rec["probs"]["eps1"])
        )
        labels = rec.get("labels")
        inst = cls(
            partition=partition,
            probs=probs,
            world=int(rec["world"]),
            k_idx=np.asarray(rec["k_idx"], dtype=np.int64),
            minus_counts=np.asarray(rec["minus_counts"], dtype=np.int64),
            explicit_labels=(
                None if labels is None else np.asarray(labels, dtype=np.int8)
            ),
            label_seed=tuple(rec["label_seed"]),
        )
        if labels is not None:
            return inst
        return _maybe_materialize(inst)


def _maybe_materialize(inst):
    """Fill the explicit label table when it fits; the law is unchanged.

    Positions of the minus labels within a cell are exchangeable, so placing
    ``minus_counts[i]`` minuses uniformly at random reproduces the joint
    i.i.d. Bernoulli law conditional on the counts.
    """
    L = inst.partition.n_cells
    N = inst.partition.n_subcells
    if L * N > EXPLICIT_LABEL_CAP:
        return inst
    labels = np.ones((L, N), dtype=np.int8)
    for i in range(L):
        mi = int(inst.minus_counts[i])
        if mi:
            pos = inst._label_rng.choice(N, size=mi, replace=False)
            labels[i, pos] = -1
    inst.explicit_labels = labels
    return inst


def sample_f_star(partition, probs, rng, world=None):
    """Draw one classifier from the pair's generative process.

    ``world`` defaults to a fair coin.  Uses explicit label storage when the
    table fits (below EXPLICIT_LABEL_CAP entries), lazy mode otherwise.
    """
    if world is None:
        world = int(rng.integers(2))
    if world not in (0, 1):
        raise ParameterOutOfRange("world must be 0 or 1")
    L = partition.n_cells
    N = partition.n_subcells
    m2 = 2 * probs.m
    k_idx = rng.integers(1, m2 + 1, size=L, dtype=np.int64)
    r = (probs.p if world == 1 else probs.q)[k_idx - 1]
    minus_counts = rng.binomial(N, r).astype(np.int64)
    label_seed = tuple(int(v) for v in rng.integers(0, 2**63 - 1, size=4))
    inst = FStarInstance(
        partition=partition,
        probs=probs,
        world=world,
        k_idx=k_idx,
        minus_counts=minus_counts,
        explicit_labels=None,
        label_seed=label_seed,
    )
    return _maybe_materialize(inst)


# ---------------------------------------------------------------------------
# honest explanations and exact losses
# ---------------------------------------------------------------------------


class HonestExplainer:
    """Reports the true partition cell with the constant +1 rule.

    +1 is the majority label of every cell in the small-gamma regime
    (all r values stay below 1/2 whenever gamma < 1/4), which makes this
    the best rectangle/constant explanation available.
    """

    class_tag = "rect_constant"

    def __init__(self, partition):
        self.partition = partition

    def explain(self, f, x):
        x = np.asarray(x, dtype=np.float64)
        idx = self.partition.locate(x[None, :])
        if idx[0] < 0:
            raise OutsideSupportError("anchor lies outside the partition's support box")
        return LocalExplanation(
            anchor=x,
            region=self.partition.rectangles[idx[0]],
            local=ConstantClassifier(1),
        )

    def explain_batch(self, f, X):
        X = np.asarray(X, dtype=np.float64)
        idx = self.partition.locate(X)
        if np.any(idx < 0):
            raise OutsideSupportError("some anchors lie outside the support box")
        plus = ConstantClassifier(1)
        rects = self.partition.rectangles
        out = [None] * X.shape[0]
        for c in np.unique(idx):
            rows = np.flatnonzero(idx == c)
            batch = LocalExplanation.batch(X[rows], rects[c], plus)
            for r, e in zip(rows, batch):
                out[r] = e
        return out


@dataclass(frozen=True)
class ExactLosses:
    """Exact per-cell local losses of the honest explanation, plus masses."""

    losses: np.ndarray
    masses: np.ndarray

    def explainability(self, alpha):
        """Exact L_alpha = total mass of cells whose local loss is >= alpha.

        Mass outside the support box (at most the clipping tail, zero for
        bounded supports) is all-+1 territory with local loss 0 and never
        counts.
        """
        return float(self.masses @ (self.losses >= alpha))


def exact_losses(instance):
    """Closed-form local losses: minus sub-cell count over sub-cell count.

    Sub-cells of one cell carry equal mass, so the conditional disagreement
    probability of the constant +1 rule is exactly minus_counts / N.
    """
    losses = instance.minus_counts / instance.n_subcells
    return ExactLosses(losses=losses, masses=instance.partition.masses.copy())


# ---------------------------------------------------------------------------
# likelihood ratio between the two worlds
# ---------------------------------------------------------------------------


def likelihood_ratio(partition, probs, X, Y, return_log=False):
    """P(labels | points, world=p) / P(labels | points, world=q).

    Within one cell the mixture component is shared, so the factor is
    mean_j prod_k (r_j if y_k = -1 else 1 - r_j) over the cell's distinct
    occupied sub-cells.  Repeated hits on one sub-cell collapse to a single
    literal (the label is one latent draw); conflicting labels there are
    impossible under either world and raise.  Points outside the support box
    must carry +1 (probability one under both worlds, factor one).

    Every summand is positive, so the computation is cancellation-free; it
    runs in log space to survive long label vectors.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    if X.shape[0] != Y.shape[0]:
        raise ParameterOutOfRange("X and Y length mismatch")
    cell = partition.locate(X)
    outside = cell < 0
    if np.any(Y[outside] != 1):
        raise OutsideLabelViolation(
            "a point outside the support box carries a label other than +1"
        )
    inside = ~outside
    if not np.any(inside):
        return 0.0 if return_log else 1.0
    cells_in = cell[inside]
    subs = partition.subcell_index(X[inside], cells_in)
    y_in = Y[inside]

    # dedup (cell, sub) pairs, checking label consistency
    order = np.lexsort((subs, cells_in))
    c_s, s_s, y_s = cells_in[order], subs[order], y_in[order]
    new = np.ones(c_s.size, dtype=bool)
    new[1:] = (c_s[1:] != c_s[:-1]) | (s_s[1:] != s_s[:-1])
    group_id = np.cumsum(new) - 1
    first_y = y_s[new][group_id]
    if np.any(first_y != y_s):
        raise InconsistentLabels("one sub-cell carries both labels in the sample")
    cells_u, y_u = c_s[new], y_s[new]

    log_num = np.log(probs.p)        # label -1 literals
    log_den = np.log1p(-probs.p)     # label +1 literals
    log_num_q = np.log(probs.q)
    log_den_q = np.log1p(-probs.q)
    m2 = 2 * probs.m

    total = 0.0
    for c in np.unique(cells_u):
        y_cell = y_u[cells_u == c]
        minus = int(np.sum(y_cell == -1))
        plus = y_cell.size - minus
        lp = logsumexp(minus * log_num + plus * log_den) - math.log(m2)
        lq = logsumexp(minus * log_num_q + plus * log_den_q) - math.log(m2)
        total += lp - lq
    return total if return_log else float(math.exp(total))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LowerBoundTrial:
    trial: int
    world: int
    estimate: float
    interval_lo: float
    interval_hi: float
    failed: bool
    audit_error: bool
    baseline_failed: Optional[bool]
    max_points_one_cell: int
    loss_hi: float   # exact L at gamma*(1+eps1)
    loss_lo: float   # exact L at gamma*(1-eps1)

    def to_record(self):
        return {
            "trial": self.trial,
            "world": self.world,
            "estimate": self.estimate,
            "interval_lo": self.interval_lo,
            "interval_hi": self.interval_hi,
            "failed": self.failed,
            "audit_error": self.audit_error,
            "baseline_failed": self.baseline_failed,
            "max_points_one_cell": self.max_points_one_cell,
            "loss_hi": self.loss_hi,
            "loss_lo": self.loss_lo,
        }


@dataclass(frozen=True)
class LowerBoundReport:
    trials: tuple
    failure_rate: float
    failure_rate_world1: float
    failure_rate_world0: float
    audit_error_rate: float
    baseline_failure_rate: Optional[float]
    n: int
    n_cells: int
    k_subcells: int

    def to_record(self):
        return {
            "failure_rate": self.failure_rate,
            "failure_rate_world1": self.failure_rate_world1,
            "failure_rate_world0": self.failure_rate_world0,
            "audit_error_rate": self.audit_error_rate,
            "baseline_failure_rate": self.baseline_failure_rate,
            "n": self.n,
            "n_cells": self.n_cells,
            "k_subcells": self.k_subcells,
            "trials": [t.to_record() for t in self.trials],
        }


def simple_audit_estimator(inp, cfg):
    """Adapter: run simple_audit, surface only the point estimate."""
    return simple_audit(inp, cfg).estimate


def constant_estimator(value):
    """Baseline that answers ``value`` regardless of the data."""

    def estimate(inp, cfg):
        return float(value)

    return estimate


def oracle_estimator(inp, cfg, losses):
    """Cheating reference: answers the exact loss at threshold gamma.

    The exact loss at gamma always lands inside the accuracy interval
    (the loss is non-increasing in the threshold), so this estimator's
    failure rate is identically zero; it calibrates experiment plumbing.
    """
    return losses.explainability(cfg.gamma)


def trial_rng(master_seed, trial):
    """Per-trial generator; trials are reproducible independently of order."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(trial)]))


def _experiment_partition(dist, cfg, lam, k_subcells, delta_c):
    probe = build_partition(dist, lam, 1)
    if k_subcells is None:
        k_subcells = choose_K(cfg.gamma, cfg.eps1, cfg.eps2, delta_c, probe.n_cells)
    return probe.with_subcells(k_subcells), k_subcells


def run_lower_bound_experiment(
    dist,
    cfg: AuditorConfig,
    lam,
    n,
    auditor=None,
    trials=100,
    master_seed=0,
    k_subcells=None,
    delta_c=DEFAULT_DELTA_C,
    baseline=None,
    trial_range=None,
):
    """Failure frequency of an auditor against the indistinguishable pair.

    Per trial: draw a world and an f*, sample n points, label them, hand the
    auditor honest explanations, and check its estimate against the exact
    accuracy interval of the drawn instance.  Auditors that refuse to answer
    (insufficient data or coverage) fall back to the constant 1/2, the
    natural hedge between the two worlds.

    Returns a LowerBoundReport; ``baseline`` (another estimator) is scored
    on the same trials when given.  ``trial_range=(lo, hi)`` restricts to a
    slice of the trial indices (each trial is seeded independently, so
    shards merge exactly).
    """
    if auditor is None:
        auditor = simple_audit_estimator
    probs = moment_matched_probs(cfg.gamma, cfg.eps1, cfg.eps2)
    partition, k_subcells = _experiment_partition(dist, cfg, lam, k_subcells, delta_c)
    explainer = HonestExplainer(partition)

    # auditors may declare a ``losses`` parameter to receive the trial's
    # exact losses (side information no real auditor has; used to calibrate)
    try:
        wants_losses = "losses" in inspect.signature(auditor).parameters
    except (TypeError, ValueError):
        wants_losses = False

    recs = []
    for t in range(*(trial_range or (0, trials))):
        rng = trial_rng(master_seed, t)
        inst = sample_f_star(partition, probs, rng)
        X = dist.sample_batch(n, rng)
        Y = inst.predict_batch(X)
        explanations = explainer.explain_batch(inst, X)
        inp = AuditInput(points=X, labels=Y, explanations=explanations)
        losses = exact_losses(inst)

        audit_error = False
        try:
            if wants_losses:
                est = float(auditor(inp, cfg, losses=losses))
            else:
                est = float(auditor(inp, cfg))
        except (InsufficientData, InsufficientCoverage):
            est = 0.5
            audit_error = True

        lo, hi = accuracy_interval(cfg, losses.explainability)
        failed = not (lo <= est <= hi)

        baseline_failed = None
        if baseline is not None:
            b_est = float(baseline(inp, cfg))
            baseline_failed = not (lo <= b_est <= hi)

        located = partition.locate(X)
        occupancy = np.bincount(located[located >= 0], minlength=partition.n_cells)
        recs.append(
            LowerBoundTrial(
                trial=t,
                world=inst.world,
                estimate=est,
                interval_lo=lo,
                interval_hi=hi,
                failed=failed,
                audit_error=audit_error,
                baseline_failed=baseline_failed,
                max_points_one_cell=int(occupancy.max()) if occupancy.size else 0,
                loss_hi=losses.explainability(cfg.gamma * (1 + cfg.eps1)),
                loss_lo=losses.explainability(cfg.gamma * (1 - cfg.eps1)),
            )
        )

    w1 = [r for r in recs if r.world == 1]
    w0 = [r for r in recs if r.world == 0]
    return LowerBoundReport(
        trials=tuple(recs),
        failure_rate=sum(r.failed for r in recs) / len(recs),
        failure_rate_world1=(sum(r.failed for r in w1) / len(w1)) if w1 else math.nan,
        failure_rate_world0=(sum(r.failed for r in w0) / len(w0)) if w0 else math.nan,
        audit_error_rate=sum(r.audit_error for r in recs) / len(recs),
        baseline_failure_rate=(
            sum(bool(r.baseline_failed) for r in recs) / len(recs)
            if baseline is not None
            else None
        ),
        n=n,
        n_cells=partition.n_cells,
        k_subcells=k_subcells,
    )


@dataclass(frozen=True)
class WorldSeparationReport:
    trials: tuple            # (trial, world, loss_hi, loss_lo, event_holds)
    freq_world1: float       # fraction of world-1 trials inside the tight band
    freq_world0: float       # fraction of world-0 trials inside the shifted band
    n_world1: int
    n_world0: int
    n_cells: int
    k_subcells: int

    def to_record(self):
        return {
            "freq_world1": self.freq_world1,
            "freq_world0": self.freq_world0,
            "n_world1": self.n_world1,
            "n_world0": self.n_world0,
            "n_cells": self.n_cells,
            "k_subcells": self.k_subcells,
            "trials": [list(t) for t in self.trials],
        }


def world_separation_experiment(
    dist,
    cfg: AuditorConfig,
    lam,
    trials=100,
    master_seed=0,
    k_subcells=None,
    delta_c=DEFAULT_DELTA_C,
    trial_range=None,
):
    """Empirical check that the two worlds' exact losses separate.

    World 1 (p): both exact losses L_{gamma*(1 +- eps1)} must land strictly
    inside (1/2 - eps2, 1/2 + eps2).  World 0 (q): both must land inside
    (1/2 + 3*eps2, 1/2 + 5*eps2).  The q-world mean offset is 1/(2m), so
    these bands can only both be hit for parameter choices with
    3*eps2 < 1/(2m) < 5*eps2; the admissible eps1 = eps2 configurations do
    this by construction.
    """
    probs = moment_matched_probs(cfg.gamma, cfg.eps1, cfg.eps2)
    partition, k_subcells = _experiment_partition(dist, cfg, lam, k_subcells, delta_c)
    half = 0.5
    recs = []
    for t in range(*(trial_range or (0, trials))):
        rng = trial_rng(master_seed, t)
        inst = sample_f_star(partition, probs, rng)
        losses = exact_losses(inst)
        hi = losses.explainability(cfg.gamma * (1 + cfg.eps1))
        lo = losses.explainability(cfg.gamma * (1 - cfg.eps1))
        if inst.world == 1:
            holds = half - cfg.eps2 < hi <= lo < half + cfg.eps2
        else:
            holds = (
                half + 3 * cfg.eps2 < hi <= lo < half + 5 * cfg.eps2
            )
        recs.append((t, inst.world, hi, lo, bool(holds)))
    w1 = [r for r in recs if r[1] == 1]
    w0 = [r for r in recs if r[1] == 0]
    return WorldSeparationReport(
        trials=tuple(recs),
        freq_world1=(sum(r[4] for r in w1) / len(w1)) if w1 else math.nan,
        freq_world0=(sum(r[4] for r in w0) / len(w0)) if w0 else math.nan,
        n_world1=len(w1),
        n_world0=len(w0),
        n_cells=partition.n_cells,
        k_subcells=k_subcells,
    )
