"""Experiment harness: validated configs, deterministic records, CSV/SVG.

Six experiment kinds are recognized:

* ``audit_upper``      simple_audit coverage on a known piecewise instance
* ``audit_lower``      auditor failure rate against the adversarial pair
* ``moment_check``     moment-system verification plus likelihood flatness
* ``world_separation`` exact-loss separation of the two hidden worlds
* ``spheres_scan``     locality/loss dichotomy sweep on the spheres instance
* ``locality_sweep``   sample-size bounds as a function of locality

Configs are JSON; validation failures raise ConfigInvalid naming the field
and the gate it broke.  Records are JSON with per-trial tables also written
as CSV ('.' decimal, ',' separator, LF line endings).  Every trial draws its
generator from SeedSequence([seed, trial_index]), so results are bit-stable
under re-runs and independent of worker count; AUDIT_WORKERS (or the config
``workers`` field) only changes wall-clock time.
"""

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adversary, auditor, moments, spheres
from .auditor import AuditorConfig
from .core import ConstantClassifier, HyperRectangle, LocalExplanation
from .distributions import ProductDistribution
from .errors import ConfigInvalid, RecordUnreadable

_TOOL_VERSION = "0.1.0"

KINDS = (
    "audit_upper",
    "audit_lower",
    "moment_check",
    "world_separation",
    "spheres_scan",
    "locality_sweep",
)

WORKERS_ENV = "AUDIT_WORKERS"


def default_workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        w = int(raw)
    except ValueError:
        raise ConfigInvalid(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if w < 1:
        raise ConfigInvalid(f"{WORKERS_ENV} must be >= 1, got {w}")
    return w


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    trials: int
    params: dict = field(default_factory=dict)
    workers: int = 0  # 0: take AUDIT_WORKERS (default 1)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigInvalid(
                f"kind: {self.kind!r} is not one of {', '.join(KINDS)}"
            )
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigInvalid("seed: must be a non-negative integer")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigInvalid("trials: must be a positive integer")
        if not isinstance(self.workers, int) or self.workers < 0:
            raise ConfigInvalid("workers: must be a non-negative integer")
        _VALIDATORS[self.kind](self.params)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigInvalid("config must be a JSON object")
        unknown = set(d) - {"kind", "seed", "trials", "params", "workers"}
        if unknown:
            raise ConfigInvalid(f"unknown config fields: {sorted(unknown)}")
        for req in ("kind", "seed", "trials"):
            if req not in d:
                raise ConfigInvalid(f"{req}: required field is missing")
        return cls(
            kind=d["kind"],
            seed=d["seed"],
            trials=d["trials"],
            params=d.get("params", {}),
            workers=d.get("workers", 0),
        )

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc

    def to_dict(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "trials": self.trials,
            "params": self.params,
            "workers": self.workers,
        }

    def effective_workers(self):
        return self.workers if self.workers >= 1 else default_workers()


def _need(params, name, types, gate, check):
    if name not in params:
        raise ConfigInvalid(f"{name}: required parameter is missing")
    v = params[name]
    if not isinstance(v, types) or isinstance(v, bool) or not check(v):
        raise ConfigInvalid(f"{name}: must satisfy {gate}; got {v!r}")
    return v


def _opt(params, name, types, gate, check, default):
    if name not in params or params[name] is None:
        return default
    return _need(params, name, types, gate, check)


def _audit_cfg_from(params):
    gamma = _need(params, "gamma", (int, float), "0 < gamma < 1", lambda v: 0 < v < 1)
    eps1 = _need(params, "eps1", (int, float), "0 < eps1 < 1", lambda v: 0 < v < 1)
    eps2 = _need(params, "eps2", (int, float), "0 < eps2 < 1", lambda v: 0 < v < 1)
    delta = _need(params, "delta", (int, float), "0 < delta < 1", lambda v: 0 < v < 1)
    if not gamma * (1 + eps1) < 1:
        raise ConfigInvalid("gamma: must satisfy gamma * (1 + eps1) < 1")
    return AuditorConfig(gamma=gamma, eps1=eps1, eps2=eps2, delta=delta)


def _validate_audit_upper(params):
    _audit_cfg_from(params)
    rates = _need(
        params, "cell_loss_rates", list, "a non-empty list of values in [0, 1]",
        lambda v: len(v) > 0 and all(isinstance(r, (int, float)) and 0 <= r <= 1 for r in v),
    )
    del rates
    _opt(params, "n", int, "n >= 1", lambda v: v >= 1, None)
    _opt(params, "lam", (int, float), "0 < lam <= 1", lambda v: 0 < v <= 1, None)
    if params.get("n") is None and params.get("lam") is None:
        raise ConfigInvalid("n: give n explicitly or lam to derive it")


def _validate_audit_lower(params):
    cfg = _audit_cfg_from(params)
    lam = _need(params, "lam", (int, float), "0 < lam < eps2^2", lambda v: 0 < v < 1)
    if not lam < cfg.eps2**2:
        raise ConfigInvalid("lam: must satisfy lam < eps2^2 (lower bound gate)")
    if not (cfg.eps1 < 1 / 48 and cfg.eps2 < 1 / 48):
        raise ConfigInvalid("eps1: lower bound gate needs eps1, eps2 < 1/48")
    if not cfg.gamma < 1 / 3:
        raise ConfigInvalid("gamma: lower bound gate needs gamma < 1/3")
    _opt(params, "n", int, "n >= 1", lambda v: v >= 1, None)
    _opt(params, "k_subcells", int, "k_subcells >= 1", lambda v: v >= 1, None)
    _opt(params, "delta_c", (int, float), "0 < delta_c < 1", lambda v: 0 < v < 1, None)
    _opt(params, "baseline", (int, float), "0 <= baseline <= 1", lambda v: 0 <= v <= 1, None)


def _validate_moment_check(params):
    _validate_audit_lower(params)
    _opt(params, "ratio_tol", (int, float), "ratio_tol > 0", lambda v: v > 0, None)


def _validate_world_separation(params):
    cfg = _audit_cfg_from(params)
    lam = _need(params, "lam", (int, float), "0 < lam < eps2^2", lambda v: 0 < v < 1)
    if not lam < cfg.eps2**2:
        raise ConfigInvalid("lam: must satisfy lam < eps2^2 (lower bound gate)")
    _opt(params, "k_subcells", int, "k_subcells >= 1", lambda v: v >= 1, None)
    _opt(params, "delta_c", (int, float), "0 < delta_c < 1", lambda v: 0 < v < 1, None)
    _opt(params, "min_freq", (int, float), "0 < min_freq <= 1", lambda v: 0 < v <= 1, None)


def _validate_spheres_scan(params):
    dims = _need(
        params, "dims", list, "a non-empty list of ints >= 5",
        lambda v: len(v) > 0 and all(isinstance(x, int) and x >= spheres.MIN_DIMENSION for x in v),
    )
    del dims
    _opt(params, "slack", (int, float), "0 < slack < 1/6", lambda v: 0 < v < 1 / 6, None)
    _opt(params, "n_train", int, "n_train >= 100", lambda v: v >= 100, None)
    _opt(params, "n_holdout", int, "n_holdout >= 100", lambda v: v >= 100, None)
    _opt(params, "restarts", int, "restarts >= 0", lambda v: v >= 0, None)


def _validate_locality_sweep(params):
    _audit_cfg_from(params)
    _need(
        params, "lam_grid", list, "a non-empty list of values in (0, 1]",
        lambda v: len(v) > 0 and all(isinstance(x, (int, float)) and 0 < x <= 1 for x in v),
    )


_VALIDATORS = {
    "audit_upper": _validate_audit_upper,
    "audit_lower": _validate_audit_lower,
    "moment_check": _validate_moment_check,
    "world_separation": _validate_world_separation,
    "spheres_scan": _validate_spheres_scan,
    "locality_sweep": _validate_locality_sweep,
}


# ---------------------------------------------------------------------------
# the known-truth piecewise instance for audit_upper
# ---------------------------------------------------------------------------


class PiecewiseInstance:
    """Equal cells on uniform [0, 1]; cell i is -1 on its lowest
    ``rate_i`` fraction, so the honest cell explanation (constant +1) has
    local loss exactly rate_i and the explainability loss is closed-form."""

    def __init__(self, cell_loss_rates):
        self.rates = np.asarray(cell_loss_rates, dtype=np.float64)
        self.n_cells = self.rates.size
        self.dist = ProductDistribution.uniform_box([0.0], [1.0])
        edges = np.linspace(0.0, 1.0, self.n_cells + 1)
        self.cells = tuple(
            HyperRectangle([edges[i]], [edges[i + 1]]) for i in range(self.n_cells)
        )
        self._plus = ConstantClassifier(1)

    def cell_of(self, X):
        idx = np.ceil(np.asarray(X)[:, 0] * self.n_cells).astype(np.int64) - 1
        return np.clip(idx, 0, self.n_cells - 1)

    def labels(self, X):
        idx = self.cell_of(X)
        frac = np.asarray(X)[:, 0] * self.n_cells - idx
        return np.where(frac <= self.rates[idx], -1, 1).astype(np.int8)

    def __call__(self, X):
        return self.labels(X)

    def explanations(self, X):
        idx = self.cell_of(X)
        out = [None] * X.shape[0]
        for c, cell in enumerate(self.cells):
            rows = np.flatnonzero(idx == c)
            if rows.size == 0:
                continue
            for r, e in zip(rows, LocalExplanation.batch(X[rows], cell, self._plus)):
                out[r] = e
        return out

    def exact_explainability(self, alpha):
        return float(np.mean(self.rates >= alpha))

    @property
    def locality(self):
        return 1.0 / self.n_cells


# ---------------------------------------------------------------------------
# per-kind runners (single trial range, worker-safe)
# ---------------------------------------------------------------------------


def _run_audit_upper(config, lo, hi):
    p = config.params
    cfg = _audit_cfg_from(p)
    inst = PiecewiseInstance(p["cell_loss_rates"])
    lam = p.get("lam") or inst.locality
    n = p.get("n") or auditor.upper_bound_samples(cfg, lam)
    interval = auditor.accuracy_interval(cfg, inst.exact_explainability)
    rows = []
    for t in range(lo, hi):
        rng = adversary.trial_rng(config.seed, t)
        X = inst.dist.sample_batch(n, rng)
        Y = inst.labels(X)
        inp = auditor.AuditInput(points=X, labels=Y, explanations=inst.explanations(X))
        rep = auditor.simple_audit(inp, cfg)
        covered = interval[0] <= rep.estimate <= interval[1]
        rows.append(
            {
                "trial": t,
                "estimate": rep.estimate,
                "n_red": rep.n_red,
                "n_blue": rep.n_blue,
                "n_skipped": rep.n_skipped,
                "covered": bool(covered),
            }
        )
    return rows


def _finish_audit_upper(config, rows):
    p = config.params
    cfg = _audit_cfg_from(p)
    inst = PiecewiseInstance(p["cell_loss_rates"])
    lam = p.get("lam") or inst.locality
    n = p.get("n") or auditor.upper_bound_samples(cfg, lam)
    m, k = auditor.audit_sample_sizes(cfg)
    interval = auditor.accuracy_interval(cfg, inst.exact_explainability)
    coverage = sum(r["covered"] for r in rows) / len(rows)
    passed = coverage >= 1.0 - cfg.delta
    results = {
        "m": m,
        "k": k,
        "n": n,
        "interval_lo": interval[0],
        "interval_hi": interval[1],
        "coverage": coverage,
        "required_coverage": 1.0 - cfg.delta,
        "passed": passed,
    }
    header = ["trial", "estimate", "n_red", "n_blue", "n_skipped", "covered"]
    return results, {"trials": (header, [[r[h] for h in header] for r in rows])}


def _lower_bound_pieces(config):
    p = config.params
    cfg = _audit_cfg_from(p)
    dist = ProductDistribution.uniform_box([0.0], [1.0])
    lam = p["lam"]
    n = p.get("n") or auditor.lower_bound_samples(cfg, lam)
    return cfg, dist, lam, n


def _run_audit_lower(config, lo, hi):
    p = config.params
    cfg, dist, lam, n = _lower_bound_pieces(config)
    baseline = p.get("baseline")
    if baseline is None:
        baseline = 0.5 + 2 * cfg.eps2
    report = adversary.run_lower_bound_experiment(
        dist,
        cfg,
        lam,
        n,
        trials=config.trials,
        master_seed=config.seed,
        k_subcells=p.get("k_subcells"),
        delta_c=p.get("delta_c") or adversary.DEFAULT_DELTA_C,
        baseline=adversary.constant_estimator(baseline),
        trial_range=(lo, hi),
    )
    rows = [t.to_record() for t in report.trials]
    for r, tr in zip(rows, report.trials):
        r["baseline_failed"] = bool(tr.baseline_failed)
    return rows


def _finish_audit_lower(config, rows):
    cfg, dist, lam, n = _lower_bound_pieces(config)
    failure_rate = sum(r["failed"] for r in rows) / len(rows)
    baseline_rate = sum(r["baseline_failed"] for r in rows) / len(rows)
    required = 1.0 / 3.0 - (config.params.get("failure_slack") or 0.1)
    results = {
        "n": n,
        "lam": lam,
        "failure_rate": failure_rate,
        "baseline_failure_rate": baseline_rate,
        "audit_error_rate": sum(r["audit_error"] for r in rows) / len(rows),
        "required_failure_rate": required,
        "passed": failure_rate >= required,
    }
    header = [
        "trial", "world", "estimate", "interval_lo", "interval_hi",
        "failed", "audit_error", "baseline_failed", "max_points_one_cell",
        "loss_hi", "loss_lo",
    ]
    return results, {"trials": (header, [[r[h] for h in header] for r in rows])}


def _run_moment_check(config, lo, hi):
    p = config.params
    cfg, dist, lam, n = _lower_bound_pieces(config)
    probs = moments.moment_matched_probs(cfg.gamma, cfg.eps1, cfg.eps2)
    partition, _ = adversary._experiment_partition(
        dist, cfg, lam, p.get("k_subcells"), p.get("delta_c") or adversary.DEFAULT_DELTA_C
    )
    rows = []
    for t in range(lo, hi):
        rng = adversary.trial_rng(config.seed, t)
        inst = adversary.sample_f_star(partition, probs, rng)
        X = dist.sample_batch(n, rng)
        Y = inst.predict_batch(X)
        ratio = adversary.likelihood_ratio(partition, probs, X, Y)
        located = partition.locate(X)
        occ = np.bincount(located[located >= 0], minlength=partition.n_cells)
        rows.append(
            {
                "trial": t,
                "world": inst.world,
                "ratio": ratio,
                "abs_dev": abs(ratio - 1.0),
                "max_points_one_cell": int(occ.max()),
            }
        )
    return rows


def _finish_moment_check(config, rows):
    cfg, _, _, n = _lower_bound_pieces(config)
    probs = moments.moment_matched_probs(cfg.gamma, cfg.eps1, cfg.eps2)
    diag = moments.verify_moment_system(probs)
    tol = config.params.get("ratio_tol") or 1e-9
    worst = max(r["abs_dev"] for r in rows)
    passed = bool(diag["ok"]) and worst <= tol
    results = {
        "n": n,
        "l": probs.l,
        "m": probs.m,
        "eps": probs.eps,
        "system_ok": bool(diag["ok"]),
        "system_failures": diag["failures"],
        "max_match_residual": float(diag["match_residuals"].max()),
        "gap_measured": diag["gap_measured"],
        "gap_exact": float(diag["gap_exact"]),
        "gap_rel_error": diag["gap_rel_error"],
        "worst_ratio_deviation": worst,
        "ratio_tol": tol,
        "passed": passed,
    }
    header = ["trial", "world", "ratio", "abs_dev", "max_points_one_cell"]
    return results, {"trials": (header, [[r[h] for h in header] for r in rows])}


def _run_world_separation(config, lo, hi):
    p = config.params
    cfg = _audit_cfg_from(p)
    dist = ProductDistribution.uniform_box([0.0], [1.0])
    report = adversary.world_separation_experiment(
        dist,
        cfg,
        p["lam"],
        trials=config.trials,
        master_seed=config.seed,
        k_subcells=p.get("k_subcells"),
        delta_c=p.get("delta_c") or adversary.DEFAULT_DELTA_C,
        trial_range=(lo, hi),
    )
    return [
        {"trial": t, "world": w, "loss_hi": hi_, "loss_lo": lo_, "holds": h}
        for (t, w, hi_, lo_, h) in report.trials
    ]


def _finish_world_separation(config, rows):
    min_freq = config.params.get("min_freq") or 0.9
    w1 = [r for r in rows if r["world"] == 1]
    w0 = [r for r in rows if r["world"] == 0]
    f1 = sum(r["holds"] for r in w1) / len(w1) if w1 else math.nan
    f0 = sum(r["holds"] for r in w0) / len(w0) if w0 else math.nan
    passed = (f1 >= min_freq) and (f0 >= min_freq)
    results = {
        "freq_world1": f1,
        "freq_world0": f0,
        "n_world1": len(w1),
        "n_world0": len(w0),
        "min_freq": min_freq,
        "passed": bool(passed),
    }
    header = ["trial", "world", "loss_hi", "loss_lo", "holds"]
    return results, {"trials": (header, [[r[h] for h in header] for r in rows])}


def _run_spheres_scan(config, lo, hi):
    # trial index enumerates dimensions here
    p = config.params
    dims = p["dims"]
    rows = []
    for t in range(lo, hi):
        d = dims[t]
        rng = adversary.trial_rng(config.seed, t)
        report = spheres.theorem3_scan(
            d,
            rng,
            n_random=(p.get("n_random") or 48),
            slack=(p.get("slack") or 0.02),
            n_train=(p.get("n_train") or 8000),
            n_holdout=(p.get("n_holdout") or 20000),
            restarts=(p.get("restarts") or 4),
        )
        for r in report.rows:
            rows.append({"trial": t, **{h: getattr(r, h) for h in spheres.SCAN_CSV_HEADER}})
    return rows


def _finish_spheres_scan(config, rows):
    n_violations = sum(r["verdict"] == "violation" for r in rows)
    results = {
        "dims": config.params["dims"],
        "n_balls": len(rows),
        "n_violations": n_violations,
        "passed": n_violations == 0,
    }
    header = spheres.SCAN_CSV_HEADER
    return results, {"scan": (header, [[r[h] for h in header] for r in rows])}


def _run_locality_sweep(config, lo, hi):
    p = config.params
    cfg = _audit_cfg_from(p)
    grid = p["lam_grid"]
    rows = []
    for t in range(lo, hi):
        lam = grid[t]
        n_upper = auditor.upper_bound_samples(cfg, lam)
        try:
            n_lower = auditor.lower_bound_samples(cfg, lam)
            gate = ""
        except Exception as exc:
            n_lower = None
            gate = str(exc)
        rows.append({"trial": t, "lam": lam, "n_upper": n_upper, "n_lower": n_lower, "gate": gate})
    return rows


def _finish_locality_sweep(config, rows):
    uppers = [r["n_upper"] for r in sorted(rows, key=lambda r: r["lam"])]
    monotone = all(a >= b for a, b in zip(uppers, uppers[1:]))
    results = {
        "monotone_upper": bool(monotone),
        "passed": bool(monotone),
    }
    header = ["lam", "n_upper", "n_lower", "gate"]
    return results, {"sweep": (header, [[r[h] for h in header] for r in rows])}


_RUNNERS = {
    "audit_upper": (_run_audit_upper, _finish_audit_upper),
    "audit_lower": (_run_audit_lower, _finish_audit_lower),
    "moment_check": (_run_moment_check, _finish_moment_check),
    "world_separation": (_run_world_separation, _finish_world_separation),
    "spheres_scan": (_run_spheres_scan, _finish_spheres_scan),
    "locality_sweep": (_run_locality_sweep, _finish_locality_sweep),
}


def _trial_count(config):
    if config.kind == "spheres_scan":
        return len(config.params["dims"])
    if config.kind == "locality_sweep":
        return len(config.params["lam_grid"])
    return config.trials


def _worker_entry(args):
    config_dict, lo, hi = args
    config = ExperimentConfig.from_dict(config_dict)
    run, _ = _RUNNERS[config.kind]
    return run(config, lo, hi)


@dataclass(frozen=True)
class ExperimentRecord:
    config: dict
    results: dict
    tables: dict  # name -> (header, rows)
    wall_clock_s: float = 0.0

    @property
    def passed(self):
        return bool(self.results.get("passed"))

    def aggregate_json(self):
        """Deterministic core: byte-identical across reruns of (config, seed).

        The worker count only affects wall clock, never results, so it lives
        in the ``meta`` block rather than the config echoed here.
        """
        payload = {
            "version": 1,
            "kind": "experiment_record",
            "tool_version": _TOOL_VERSION,
            "config": {k: v for k, v in self.config.items() if k != "workers"},
            "results": self.results,
            "tables": {
                name: {"header": header, "rows": rows}
                for name, (header, rows) in self.tables.items()
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)

    def to_json(self):
        payload = json.loads(self.aggregate_json())
        payload["meta"] = {
            "wall_clock_s": self.wall_clock_s,
            "workers": self.config.get("workers", 0),
        }
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise RecordUnreadable(f"record is not valid JSON: {exc}") from exc
        if payload.get("kind") != "experiment_record" or payload.get("version") != 1:
            raise RecordUnreadable("not a version-1 experiment record")
        tables = {
            name: (tab["header"], tab["rows"])
            for name, tab in payload.get("tables", {}).items()
        }
        meta = payload.get("meta", {})
        config = dict(payload["config"])
        if "workers" in meta:
            config["workers"] = meta["workers"]
        return cls(
            config=config,
            results=payload["results"],
            tables=tables,
            wall_clock_s=float(meta.get("wall_clock_s", 0.0)),
        )

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        rec_path = out / "record.json"
        rec_path.write_text(self.to_json() + "\n")
        paths.append(rec_path)
        for name, (header, rows) in self.tables.items():
            csv_path = out / f"{name}.csv"
            with open(csv_path, "w", newline="") as fh:
                writer = csv.writer(fh, delimiter=",", lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow(["" if v is None else v for v in row])
            paths.append(csv_path)
        return paths


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def run_experiment(config: ExperimentConfig) -> ExperimentRecord:
    """Execute an experiment, merging worker shards in trial order."""
    t_start = time.monotonic()
    run, finish = _RUNNERS[config.kind]
    total = _trial_count(config)
    workers = min(config.effective_workers(), total)
    if workers <= 1:
        rows = run(config, 0, total)
    else:
        chunk = math.ceil(total / workers)
        jobs = [
            (config.to_dict(), lo, min(lo + chunk, total))
            for lo in range(0, total, chunk)
        ]
        rows = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for shard in pool.map(_worker_entry, jobs):
                rows.extend(shard)
        rows.sort(key=lambda r: r["trial"])
    results, tables = finish(config, rows)
    return ExperimentRecord(
        config=config.to_dict(),
        results=_json_safe(results),
        tables={k: (_json_safe(h), _json_safe(r)) for k, (h, r) in tables.items()},
        wall_clock_s=time.monotonic() - t_start,
    )


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------


def _deterministic_matplotlib():
    import matplotlib

    matplotlib.use("svg", force=False)
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "explaudit"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_record(record: ExperimentRecord, out_dir) -> list:
    """Render the record's standard figure(s) as deterministic SVG."""
    plt = _deterministic_matplotlib()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = record.config["kind"]
    paths = []

    def table(name):
        header, rows = record.tables[name]
        return {h: [r[i] for r in rows] for i, h in enumerate(header)}

    if kind in ("audit_upper", "audit_lower"):
        t = table("trials")
        fig, ax = plt.subplots(figsize=(7, 4.2))
        if kind == "audit_lower":
            est = np.asarray(t["estimate"], dtype=np.float64)
            world = np.asarray(t["world"])
            for w, color in ((1, "tab:blue"), (0, "tab:orange")):
                ax.hist(est[world == w], bins=30, alpha=0.6, color=color,
                        label=f"world {w}")
            ax.legend()
        else:
            ax.hist(np.asarray(t["estimate"], dtype=np.float64), bins=30,
                    color="tab:blue")
            ax.axvline(record.results["interval_lo"], color="k", ls="--")
            ax.axvline(record.results["interval_hi"], color="k", ls="--")
        ax.set_xlabel("audit estimate")
        ax.set_ylabel("trials")
        ax.set_title(kind)
        p = out / f"{kind}.svg"
        _save(fig, p)
        plt.close(fig)
        paths.append(p)
    elif kind == "world_separation":
        t = table("trials")
        fig, ax = plt.subplots(figsize=(7, 4.2))
        world = np.asarray(t["world"])
        hi = np.asarray(t["loss_hi"], dtype=np.float64)
        trial = np.asarray(t["trial"])
        for w, color in ((1, "tab:blue"), (0, "tab:orange")):
            ax.scatter(trial[world == w], hi[world == w], s=12, color=color,
                       label=f"world {w}")
        ax.set_xlabel("trial")
        ax.set_ylabel("exact explainability loss")
        ax.legend()
        ax.set_title("world separation")
        p = out / "world_separation.svg"
        _save(fig, p)
        plt.close(fig)
        paths.append(p)
    elif kind == "moment_check":
        t = table("trials")
        fig, ax = plt.subplots(figsize=(7, 4.2))
        ax.semilogy(t["trial"], np.maximum(np.asarray(t["abs_dev"], dtype=np.float64), 1e-18),
                    marker="o", lw=0.8)
        ax.axhline(record.results["ratio_tol"], color="k", ls="--")
        ax.set_xlabel("trial")
        ax.set_ylabel("|likelihood ratio - 1|")
        ax.set_title("moment check")
        p = out / "moment_check.svg"
        _save(fig, p)
        plt.close(fig)
        paths.append(p)
    elif kind == "spheres_scan":
        t = table("scan")
        fig, ax = plt.subplots(figsize=(7, 4.2))
        mass = np.maximum(np.asarray(t["mass"], dtype=np.float64), 1e-300)
        loss = np.asarray(t["best_loss"], dtype=np.float64)
        dims = np.asarray(t["d"])
        for d in sorted(set(dims.tolist())):
            sel = dims == d
            ax.scatter(mass[sel], loss[sel], s=14, label=f"d={d}")
            ax.axvline(3.0 ** (1 - d), ls=":", lw=0.8, color="gray")
        ax.axhline(1 / 6, color="k", ls="--", lw=0.8)
        ax.set_xscale("log")
        ax.set_xlabel("ball mass")
        ax.set_ylabel("best linear loss")
        ax.legend()
        ax.set_title("locality/loss dichotomy")
        p = out / "spheres_scan.svg"
        _save(fig, p)
        plt.close(fig)
        paths.append(p)
    elif kind == "locality_sweep":
        t = table("sweep")
        fig, ax = plt.subplots(figsize=(7, 4.2))
        lam = np.asarray(t["lam"], dtype=np.float64)
        ax.loglog(lam, np.asarray(t["n_upper"], dtype=np.float64), marker="o",
                  label="sufficient (upper bound)")
        lower = [(x, v) for x, v in zip(lam, t["n_lower"]) if v not in (None, "")]
        if lower:
            ax.loglog([x for x, _ in lower], [float(v) for _, v in lower],
                      marker="s", label="necessary (lower bound)")
        ax.set_xlabel("locality lambda")
        ax.set_ylabel("samples")
        ax.legend()
        ax.set_title("sample size vs locality")
        p = out / "locality_sweep.svg"
        _save(fig, p)
        plt.close(fig)
        paths.append(p)
    else:  # pragma: no cover - kinds are validated upstream
        raise RecordUnreadable(f"no plot defined for kind {kind!r}")
    return paths
