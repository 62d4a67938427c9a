"""Hot numeric kernels with an optional numba fast path.

Two operations dominate profile time in the larger experiments:

* locating millions of points in a binary-split partition tree, and
* sweeping every threshold of a 1-d linear classifier for its 0-1 loss.

Both ship in two versions: a pure-numpy implementation (always available)
and an ``@njit`` version compiled on import when numba is installed.  Set
``EXPLAUDIT_NUMBA=0`` to force the numpy path; ``explaudit.kernel_backend()``
reports which one is active.  ``benchmarks/bench_kernels.py`` compares them.
"""

import os

import numpy as np

_WANT_NUMBA = os.environ.get("EXPLAUDIT_NUMBA", "1").lower() not in ("0", "false", "no")

try:  # pragma: no cover - exercised indirectly via backend selection
    if not _WANT_NUMBA:
        raise ImportError("numba disabled via EXPLAUDIT_NUMBA")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


def kernel_backend():
    """Name of the active kernel implementation: ``"numba"`` or ``"numpy"``."""
    return "numba" if _HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# point location in a binary split tree
#
# Tree layout (structure-of-arrays): node i splits on axis[i] at cut[i];
# a point x goes left when x[axis[i]] <= cut[i], matching half-open
# (lo, hi] cells whose left child owns the cut value.  leaf[i] >= 0 marks
# a leaf and stores the rectangle index; internal nodes have leaf[i] == -1.
# ---------------------------------------------------------------------------


def _locate_numpy(axis, cut, left, right, leaf, X):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = leaf[0] < 0
    if not active:
        return np.full(n, leaf[0], dtype=np.int64)
    pending = np.arange(n)
    while pending.size:
        nd = node[pending]
        ax = axis[nd]
        go_left = X[pending, ax] <= cut[nd]
        node[pending] = np.where(go_left, left[nd], right[nd])
        pending = pending[leaf[node[pending]] < 0]
    return leaf[node]


@njit(cache=True)
def _locate_numba(axis, cut, left, right, leaf, X):  # pragma: no cover - jit
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while leaf[node] < 0:
            if X[i, axis[node]] <= cut[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf[node]
    return out


def locate_points(axis, cut, left, right, leaf, X):
    """Rectangle index for each row of ``X`` (callers handle out-of-box rows)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if _HAVE_NUMBA:
        return _locate_numba(axis, cut, left, right, leaf, X)
    return _locate_numpy(axis, cut, left, right, leaf, X)


# ---------------------------------------------------------------------------
# exact threshold sweep for 1-d linear classifiers
#
# Classifier family: predict +1 iff projection >= b.  Over a finite sample
# only thresholds at distinct projection values (plus the two extremes)
# produce distinct labelings, so the sweep is exact for the sample.
# ---------------------------------------------------------------------------


def _sweep_numpy(proj_sorted, y_sorted):
    n = proj_sorted.shape[0]
    plus_prefix = np.concatenate(([0], np.cumsum(y_sorted == 1)))
    minus_total = int(np.sum(y_sorted == -1))
    minus_suffix = minus_total - np.concatenate(([0], np.cumsum(y_sorted == -1)))
    errors = plus_prefix + minus_suffix
    valid = np.ones(n + 1, dtype=bool)
    valid[1:n] = proj_sorted[1:] > proj_sorted[:-1]
    errors = np.where(valid, errors, n + 1)
    t = int(np.argmin(errors))
    return int(errors[t]), t


@njit(cache=True)
def _sweep_numba(proj_sorted, y_sorted):  # pragma: no cover - jit
    n = proj_sorted.shape[0]
    minus_suffix = 0
    for i in range(n):
        if y_sorted[i] == -1:
            minus_suffix += 1
    best_err = minus_suffix  # t = 0: everything predicted +1
    best_t = 0
    plus_prefix = 0
    for t in range(1, n + 1):
        if y_sorted[t - 1] == 1:
            plus_prefix += 1
        else:
            minus_suffix -= 1
        if t < n and proj_sorted[t] <= proj_sorted[t - 1]:
            continue  # threshold would fall inside a tie run
        err = plus_prefix + minus_suffix
        if err < best_err:
            best_err = err
            best_t = t
    return best_err, best_t


def sweep_threshold(proj, y):
    """Best 0-1 loss over thresholds of ``sign(proj - b)`` on a labeled sample.

    Returns ``(errors, threshold)`` where ``errors`` counts misclassified
    points at the optimum and ``threshold`` realizes it under the rule
    "predict +1 iff proj >= threshold".
    """
    proj = np.asarray(proj, dtype=np.float64)
    y = np.asarray(y, dtype=np.int8)
    order = np.argsort(proj, kind="stable")
    ps = np.ascontiguousarray(proj[order])
    ys = np.ascontiguousarray(y[order])
    if _HAVE_NUMBA:
        err, t = _sweep_numba(ps, ys)
    else:
        err, t = _sweep_numpy(ps, ys)
    n = ps.shape[0]
    if t == 0:
        b = ps[0] - 1.0  # below the sample: predict +1 everywhere seen
    elif t == n:
        b = ps[n - 1] + 1.0  # above the sample: predict -1 everywhere seen
    else:
        b = ps[t]
    return int(err), float(b)
