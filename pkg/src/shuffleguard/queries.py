"""Union-preserving queries: evaluation, output ranges, and distances.

A query here is union-preserving: evaluating it on the disjoint union of two
datasets equals the sum of the per-dataset results. That additivity is what
lets group estimates be checked against the sums of their subgroups, so every
detection rule in the defense layer ultimately calls into this module.

Supported queries:
  - Count:     inputs in {0,1}, scalar result, l1 geometry.
  - Sum:       inputs in {0..U}, scalar result, l1 geometry.
  - Histogram: inputs in {0..U}, (U+1)-bin tally, l_inf geometry.
  - RangeTree: inputs in {0..U}, stacked dyadic-interval tallies (one
               histogram per tree level, flattened), l_inf geometry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import DomainError, ShapeError

QueryValue = Union[int, np.ndarray]


class QueryKind(enum.Enum):
    COUNT = "count"
    SUM = "sum"
    HISTOGRAM = "hist"
    RANGE_TREE = "range"


_SCALAR_KINDS = (QueryKind.COUNT, QueryKind.SUM)


@lru_cache(maxsize=None)
def _tree_layout(domain_size: int) -> tuple[tuple[int, int, int], ...]:
    """Dyadic levels over {0..U}, padded to a power of two.

    Returns (flat_offset, width, shift) per level, from singleton intervals
    (shift 0) up to the single root interval.
    """
    base = domain_size + 1
    padded = 1 << max(0, math.ceil(math.log2(base))) if base > 1 else 1
    levels = []
    offset = 0
    shift = 0
    width = padded
    while width >= 1:
        levels.append((offset, width, shift))
        offset += width
        width //= 2
        shift += 1
    return tuple(levels)


@dataclass(frozen=True)
class Query:
    """A union-preserving query descriptor.

    ``domain_size`` is U, the largest admissible input value; it is ignored
    for Count (whose inputs are bits).
    """

    kind: QueryKind
    domain_size: int = 0

    def __post_init__(self):
        if self.domain_size < 0:
            raise ValueError("domain_size must be nonnegative")

    @property
    def norm(self) -> str:
        return "l1" if self.kind in _SCALAR_KINDS else "linf"

    @property
    def max_input(self) -> int:
        return 1 if self.kind is QueryKind.COUNT else self.domain_size

    @property
    def num_bins(self) -> int:
        """Length of the (flattened) value vector; 1 for scalar queries."""
        if self.kind in _SCALAR_KINDS:
            return 1
        if self.kind is QueryKind.HISTOGRAM:
            return self.domain_size + 1
        return sum(w for _, w, _ in _tree_layout(self.domain_size))

    @property
    def tree_levels(self) -> tuple[tuple[int, int, int], ...]:
        if self.kind is not QueryKind.RANGE_TREE:
            raise ShapeError("tree_levels is defined for RangeTree only")
        return _tree_layout(self.domain_size)


@dataclass(frozen=True)
class Dataset:
    """An input multiset; values are validated lazily against a query."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.int64)
        )

    @property
    def n(self) -> int:
        return int(self.values.size)


def _as_values(d) -> np.ndarray:
    if isinstance(d, Dataset):
        return d.values
    return np.asarray(d, dtype=np.int64)


def check_domain(q: Query, values: np.ndarray) -> None:
    bad = np.flatnonzero((values < 0) | (values > q.max_input))
    if bad.size:
        i = int(bad[0])
        raise DomainError(
            f"value {int(values[i])} at index {i} outside [0, {q.max_input}]"
        )


def zero_value(q: Query) -> QueryValue:
    if q.kind in _SCALAR_KINDS:
        return 0
    return np.zeros(q.num_bins, dtype=np.int64)


def eval_query(q: Query, d) -> QueryValue:
    """Exact (non-private) query answer."""
    values = _as_values(d)
    check_domain(q, values)
    if q.kind in _SCALAR_KINDS:
        return int(values.sum())
    if q.kind is QueryKind.HISTOGRAM:
        return np.bincount(values, minlength=q.num_bins).astype(np.int64)
    out = np.zeros(q.num_bins, dtype=np.int64)
    for offset, width, shift in q.tree_levels:
        out[offset : offset + width] = np.bincount(
            values >> shift, minlength=width
        )
    return out


def value_norm(q: Query, v: QueryValue) -> float:
    """The query's detection norm: |.| for scalars, max |.| for vectors."""
    if q.kind in _SCALAR_KINDS:
        return abs(float(v))
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def check_shape(q: Query, v: QueryValue) -> QueryValue:
    if q.kind in _SCALAR_KINDS:
        if isinstance(v, np.ndarray) and v.ndim > 0:
            raise ShapeError(f"{q.kind.value} value must be scalar")
        return int(v)
    v = np.asarray(v, dtype=np.int64)
    if v.shape != (q.num_bins,):
        raise ShapeError(
            f"{q.kind.value} value must have shape ({q.num_bins},), got {v.shape}"
        )
    return v


def range_diameter(q: Query, n: int) -> float:
    """Diameter of the query's output set over all size-n datasets."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if q.kind is QueryKind.SUM:
        return float(n * q.domain_size)
    # Count under l1, Histogram/RangeTree under l_inf all have diameter n.
    return float(n)


def _hist_dis(bins: np.ndarray, n: int) -> int:
    """Smallest t such that some valid n-total histogram is within l_inf t.

    Feasibility of a given t is monotone: each coordinate may be clamped to
    [max(0, b-t), b+t] (nonnegative), so t works iff the reachable totals
    bracket n.
    """

    def feasible(t: int) -> bool:
        # Each coordinate must admit a nonnegative value within t at all.
        if bins.size and int(bins.min()) + t < 0:
            return False
        lo = np.maximum(bins - t, 0).sum()
        hi = np.maximum(bins + t, 0).sum()
        return lo <= n <= hi

    if feasible(0):
        return 0
    hi = int(np.max(np.abs(bins))) + n + 1
    lo_t, hi_t = 0, hi
    while hi_t - lo_t > 1:
        mid = (lo_t + hi_t) // 2
        if feasible(mid):
            hi_t = mid
        else:
            lo_t = mid
    return hi_t


def dis_to_range(q: Query, n: int, v: QueryValue) -> float:
    """Distance from a value to the set of attainable size-n query outputs."""
    v = check_shape(q, v)
    if q.kind in _SCALAR_KINDS:
        top = n if q.kind is QueryKind.COUNT else n * q.domain_size
        return float(max(0, -v, v - top))
    if q.kind is QueryKind.HISTOGRAM:
        return float(_hist_dis(v, n))
    worst = 0
    for offset, width, _ in q.tree_levels:
        worst = max(worst, _hist_dis(v[offset : offset + width], n))
    return float(worst)
