"""Equal-ish mass rectangular partitions via conditional median splits.

For a product distribution the conditional median along any axis sits at the
midpoint of the rectangle's CDF interval, so cutting there splits the mass
exactly in half.  Repeating while a cell's mass exceeds ``4 * alpha`` yields
top-level cells with mass in ``(2*alpha, 4*alpha]`` whenever a split happens
at all, and in ``[alpha, 4*alpha]`` always.

Each top-level cell is further halved ``t = ceil(log2(K))`` times (axes
cycled), giving ``2**t`` equal-mass sub-cells per cell, between ``K`` and
``2K - 1`` of them, each carrying between ``1/(4K)`` and ``1/K`` of the
cell's mass.  When ``2**t`` is small the sub-rectangles are materialized;
when it is astronomically large (the indistinguishability experiments push
it past 2**38) they stay virtual and points are mapped to sub-cell indices
arithmetically from their in-cell CDF coordinates.
"""

import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .core import HyperRectangle
from .errors import OutsideSupportError, ParameterOutOfRange, ZeroMassRectangle

# above this many sub-cells per cell, skip materialization and index virtually
EXPLICIT_SUBCELL_LIMIT = 4096
# cap on total materialized sub-rectangle objects across all cells
MATERIALIZE_TOTAL_CAP = 1 << 17


def _depth_for(k_subcells):
    """Smallest t with 2**t >= k_subcells."""
    t = 0 if k_subcells == 1 else math.ceil(math.log2(k_subcells))
    while (1 << t) < k_subcells:
        t += 1
    return t


def _cdf_bounds(dist, rect):
    lo = dist.cdf_point(rect.lo)
    hi = dist.cdf_point(rect.hi)
    return lo, hi


def split_rectangle(dist, rect, axis=None):
    """Split a rectangle at the conditional mass median of one axis.

    Returns ``(left, right)`` with the cut value owned by the left piece
    (half-open cells).  Default axis is the one with the widest CDF span,
    ties to the lowest index.
    """
    ulo, uhi = _cdf_bounds(dist, rect)
    widths = uhi - ulo
    if np.all(widths <= 0.0):
        raise ZeroMassRectangle("rectangle carries no mass; nothing to split")
    if axis is None:
        axis = int(np.argmax(widths))
    cut = dist.marginals[axis].ppf(0.5 * (ulo[axis] + uhi[axis]))
    cut = float(cut)
    if not rect.lo[axis] < cut < rect.hi[axis]:
        raise ZeroMassRectangle(
            f"median cut on axis {axis} degenerated to a face; mass too thin"
        )
    left_hi = rect.hi.copy()
    left_hi[axis] = cut
    right_lo = rect.lo.copy()
    right_lo[axis] = cut
    return HyperRectangle(rect.lo, left_hi), HyperRectangle(right_lo, rect.hi)


@dataclass
class PartitionSpec:
    """A built partition: top-level cells plus the sub-cell layout.

    ``sub_rectangles`` is ``None`` in virtual mode; sub-cells still exist
    mathematically and ``subcell_index`` addresses them.
    """

    rectangles: tuple
    masses: np.ndarray
    alpha: float
    k_subcells: int                      # requested K
    subcell_depth: int                   # t; actual sub-cell count is 2**t
    sub_rectangles: Optional[tuple]      # tuple of tuples, or None (virtual)
    dist: object
    root_box: HyperRectangle
    # per-cell CDF bounds, shape (L, d)
    cdf_lo: np.ndarray = field(repr=False, default=None)
    cdf_hi: np.ndarray = field(repr=False, default=None)
    # locate tree, structure-of-arrays
    tree_axis: np.ndarray = field(repr=False, default=None)
    tree_cut: np.ndarray = field(repr=False, default=None)
    tree_left: np.ndarray = field(repr=False, default=None)
    tree_right: np.ndarray = field(repr=False, default=None)
    tree_leaf: np.ndarray = field(repr=False, default=None)

    @property
    def n_cells(self):
        return len(self.rectangles)

    @property
    def n_subcells(self):
        return 1 << self.subcell_depth

    @property
    def subcell_mass(self):
        """Mass of each sub-cell, per top-level cell (equal within a cell)."""
        return self.masses / self.n_subcells

    def locate(self, X):
        """Top-level cell index per row of X; -1 for rows outside the root box."""
        X = np.asarray(X, dtype=np.float64)
        idx = _kernels.locate_points(
            self.tree_axis, self.tree_cut, self.tree_left, self.tree_right,
            self.tree_leaf, X,
        )
        inside = self.root_box.contains_batch(X)
        return np.where(inside, idx, -1)

    def subcell_index(self, X, cell_idx):
        """Sub-cell index of each point inside its own top-level cell.

        Dyadic construction: per-axis in-cell CDF coordinates in (0, 1],
        halved ``t`` times with the axis cycling by level; the level-s bit
        is the s-th most significant bit of the index.  Matches the
        materialized layout exactly (tested against it at small depth).
        """
        X = np.asarray(X, dtype=np.float64)
        cell_idx = np.asarray(cell_idx, dtype=np.int64)
        if np.any(cell_idx < 0):
            raise OutsideSupportError("subcell_index called with out-of-support rows")
        d = self.root_box.dim
        U = np.empty_like(X)
        for ax in range(d):
            U[:, ax] = self.dist.marginals[ax].cdf(X[:, ax])
        lo = self.cdf_lo[cell_idx]
        hi = self.cdf_hi[cell_idx]
        V = (U - lo) / (hi - lo)
        # guard rounding: coordinates live in (0, 1]
        np.clip(V, 1e-300, 1.0, out=V)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        for s in range(self.subcell_depth):
            ax = s % d
            v2 = V[:, ax] * 2.0
            bit = v2 > 1.0
            V[:, ax] = v2 - bit
            idx = (idx << 1) | bit
        return idx

    def with_subcells(self, k_subcells, explicit_limit=EXPLICIT_SUBCELL_LIMIT):
        """Same top-level cells, different sub-cell budget."""
        import dataclasses

        if k_subcells < 1:
            raise ParameterOutOfRange("k_subcells must be >= 1")
        t = _depth_for(k_subcells)
        spec = dataclasses.replace(
            self, k_subcells=int(k_subcells), subcell_depth=t, sub_rectangles=None
        )
        if (1 << t) <= explicit_limit and self.n_cells << t <= MATERIALIZE_TOTAL_CAP:
            spec.sub_rectangles = tuple(
                spec.materialize_subcells(i) for i in range(spec.n_cells)
            )
        return spec

    def materialize_subcells(self, cell):
        """The 2**t sub-rectangles of one cell, in sub-cell index order."""
        rects = [self.rectangles[cell]]
        d = self.root_box.dim
        for s in range(self.subcell_depth):
            nxt = []
            for r in rects:
                a, b = split_rectangle(self.dist, r, axis=s % d)
                nxt.append(a)
                nxt.append(b)
            rects = nxt
        return tuple(rects)

    def to_record(self):
        """Generative parameters plus the realized cell geometry.

        Rebuilding from the generative parameters replays the construction
        bit-exactly; the decimal-string bounds and masses make the record
        self-describing and let ``from_record`` verify the replay.
        """
        cells = [
            {
                "lo": [repr(float(v)) for v in r.lo],
                "hi": [repr(float(v)) for v in r.hi],
                "mass": repr(float(self.masses[i])),
            }
            for i, r in enumerate(self.rectangles)
        ]
        return {
            "version": 1,
            "kind": "partition",
            "dist": self.dist.to_spec(),
            "alpha": self.alpha,
            "k_subcells": self.k_subcells,
            "n_subcells": self.n_subcells,
            "cells": cells,
        }

    @classmethod
    def from_record(cls, rec):
        from .errors import RecordUnreadable

        if not isinstance(rec, dict) or rec.get("kind") != "partition":
            raise RecordUnreadable("not a partition record")
        if rec.get("version") != 1:
            raise RecordUnreadable(f"unsupported partition record version {rec.get('version')!r}")
        from .distributions import distribution_from_spec

        dist = distribution_from_spec(rec["dist"])
        spec = build_partition(dist, float(rec["alpha"]), int(rec["k_subcells"]))
        cells = rec.get("cells")
        if cells is not None:
            if len(cells) != spec.n_cells:
                raise RecordUnreadable(
                    f"record lists {len(cells)} cells, replay produced {spec.n_cells}"
                )
            for i, cell in enumerate(cells):
                lo = np.array([float(v) for v in cell["lo"]])
                hi = np.array([float(v) for v in cell["hi"]])
                r = spec.rectangles[i]
                if not (np.array_equal(lo, r.lo) and np.array_equal(hi, r.hi)):
                    raise RecordUnreadable(f"cell {i} bounds do not replay bit-exactly")
        return spec


def build_partition(dist, alpha, k_subcells, explicit_limit=EXPLICIT_SUBCELL_LIMIT):
    """Median-split partition of the distribution's support box.

    ``alpha`` is the locality target: top-level cells end with mass in
    ``[alpha, 4*alpha]``.  ``k_subcells`` asks for at least that many
    equal-mass sub-cells per cell (rounded up to a power of two).
    """
    if not 0.0 < alpha <= 1.0:
        raise ParameterOutOfRange("alpha must lie in (0, 1]")
    if k_subcells < 1:
        raise ParameterOutOfRange("k_subcells must be >= 1")
    root = dist.support_box()
    d = root.dim
    ulo0, uhi0 = _cdf_bounds(dist, root)
    root_mass = float(np.prod(uhi0 - ulo0))
    if root_mass <= 0.0:
        raise ZeroMassRectangle("support box carries no mass")

    # DFS over (rect, cdf_lo, cdf_hi, mass, depth); preorder node layout
    axis_l, cut_l, left_l, right_l, leaf_l = [], [], [], [], []
    rects, cell_ulo, cell_uhi, cell_mass = [], [], [], []

    def visit(rect, ulo, uhi, mass, depth):
        node = len(axis_l)
        axis_l.append(0)
        cut_l.append(0.0)
        left_l.append(-1)
        right_l.append(-1)
        leaf_l.append(-1)
        if mass <= 4.0 * alpha:
            leaf_l[node] = len(rects)
            rects.append(rect)
            cell_ulo.append(ulo)
            cell_uhi.append(uhi)
            cell_mass.append(mass)
            return node
        ax = depth % d
        lo_r, hi_r = split_rectangle(dist, rect, axis=ax)
        umid = 0.5 * (ulo[ax] + uhi[ax])
        ulo2 = ulo.copy(); ulo2[ax] = umid
        uhi2 = uhi.copy(); uhi2[ax] = umid
        axis_l[node] = ax
        cut_l[node] = lo_r.hi[ax]
        left_l[node] = visit(lo_r, ulo, uhi2, mass * 0.5, depth + 1)
        right_l[node] = visit(hi_r, ulo2, uhi, mass * 0.5, depth + 1)
        return node

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10_000))
    try:
        visit(root, ulo0, uhi0, root_mass, 0)
    finally:
        sys.setrecursionlimit(old_limit)

    t = _depth_for(k_subcells)

    spec = PartitionSpec(
        rectangles=tuple(rects),
        masses=np.asarray(cell_mass, dtype=np.float64),
        alpha=float(alpha),
        k_subcells=int(k_subcells),
        subcell_depth=t,
        sub_rectangles=None,
        dist=dist,
        root_box=root,
        cdf_lo=np.asarray(cell_ulo, dtype=np.float64),
        cdf_hi=np.asarray(cell_uhi, dtype=np.float64),
        tree_axis=np.asarray(axis_l, dtype=np.int64),
        tree_cut=np.asarray(cut_l, dtype=np.float64),
        tree_left=np.asarray(left_l, dtype=np.int64),
        tree_right=np.asarray(right_l, dtype=np.int64),
        tree_leaf=np.asarray(leaf_l, dtype=np.int64),
    )
    if (1 << t) <= explicit_limit and spec.n_cells << t <= MATERIALIZE_TOTAL_CAP:
        spec.sub_rectangles = tuple(
            spec.materialize_subcells(i) for i in range(spec.n_cells)
        )
    return spec
