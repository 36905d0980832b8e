"""Base shuffle-DP protocols: randomizers, analyzers, and cost descriptors.

Each protocol fixes a payload alphabet encoded as plain int64 codes so that
whole levels can be randomized and analyzed with vectorized numpy calls:

  - dlap-count:   codes +1 / -1 (signed unary tokens).
  - splitmix-sum: codes in [0, q) (additive residues mod q).
  - perbin-hist:  codes +-(bin+1); sign is the token sign, |code|-1 the bin.
  - tree-hist:    perbin-hist codes over the flattened dyadic-interval bins.

Noise model: a user in a group of nominal size m contributes NB(1/m, p)
tokens per sign (per bin, for histograms), so the group aggregate carries
exactly discrete-Laplace(p) noise — the NB shares are infinitely divisible.
Because the shares of the honest members of one group are exchangeable and
only their sum is observable after shuffling, the level-wide randomizers
below draw each group's honest noise total in one shot as NB(h/m, p),
where h is the number of honest contributors; this is distributionally
identical to h independent per-user draws.

The matching ``error_bound`` is the exact DLap tail quantile and doubles as
the defense layer's detection threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ProtocolError
from .noise import dlap_threshold, nb_sample, noise_base
from .queries import Query, QueryKind, QueryValue

#: Shares each user splits its input into under splitmix-sum.
SUM_SHARES = 3


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) privacy budget plus an error-probability budget."""

    epsilon: float
    delta: float
    beta: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be positive")
        if not 0 <= self.delta < 1:
            raise ParameterError("delta must be in [0, 1)")
        if not 0 < self.beta < 1:
            raise ParameterError("beta must be in (0, 1)")


def _interleave(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty(a.size + b.size, dtype=np.int64)
    out[0::2] = a
    out[1::2] = b
    return out


def _resolve_groups(nu: int, m: int, ng: int | None) -> int:
    if ng is None:
        if m < 1 or nu % m:
            raise ParameterError(f"{nu} users do not split into groups of {m}")
        ng = nu // m
    return ng


class BaseProtocol:
    """Common interface: level-wide randomization and a pure analyzer fold."""

    name: str

    def __init__(self, query: Query):
        self.query = query
        self.rejected = 0

    # -- randomization -----------------------------------------------------

    def randomize(self, x: int, epsilon: float, m: int, rng) -> np.ndarray:
        """One user's payload codes at budget epsilon in a group of size m."""
        groups, _ = self.randomize_level(
            np.asarray([x], dtype=np.int64), epsilon, m, rng, ng=1
        )
        return groups[0]

    def randomize_level(
        self,
        xs: np.ndarray,
        epsilon: float,
        m: int,
        rng,
        honest: np.ndarray | None = None,
        ng: int | None = None,
    ) -> tuple[list[np.ndarray], int]:
        """Payloads for one tree level of contiguous equal-sized groups.

        ``m`` is the nominal group size that sets each user's noise share
        (r = 1/m); ``ng`` overrides the group count for partial groups.
        Users with ``honest`` false contribute neither data nor noise
        (their behavior is supplied by the adversary module). Returns one
        payload array per group plus the total honest message count.
        """
        raise NotImplementedError

    def data_payload(self, x: int, rng) -> np.ndarray:
        """The noiseless payload a user would send for input x (all levels'
        data tokens, no noise tokens) — what a noise-dropping user emits."""
        raise NotImplementedError

    # -- analysis ----------------------------------------------------------

    def analyze(self, payloads: np.ndarray) -> QueryValue:
        raise NotImplementedError

    # -- descriptors -------------------------------------------------------

    def error_bound(self, epsilon: float, beta: float) -> int:
        """High-probability bound on |analyze(group) - truth| (detection theta)."""
        raise NotImplementedError

    def expected_msgs(self, epsilon: float, m: int) -> float:
        raise NotImplementedError

    def bits_per_msg(self) -> int:
        """Payload width; the shuffler-token bits are accounted separately."""
        raise NotImplementedError

    # -- shared helpers ----------------------------------------------------

    def _honest_per_group(
        self, xs: np.ndarray, honest: np.ndarray | None, ng: int
    ) -> tuple[np.ndarray, np.ndarray]:
        """(honest-count, honest-data-sum) per group, groups contiguous."""
        size = xs.size // ng
        if honest is None:
            counts = np.full(ng, size, dtype=np.int64)
            sums = xs.reshape(ng, size).sum(axis=1)
        else:
            counts = honest.reshape(ng, size).sum(axis=1)
            sums = np.where(honest, xs, 0).reshape(ng, size).sum(axis=1)
        return counts, sums


class CountProtocol(BaseProtocol):
    """Signed unary tokens: one +1 per set bit, DLap(e^-eps) group noise."""

    name = "dlap-count"

    def randomize_level(self, xs, epsilon, m, rng, honest=None, ng=None):
        ng = _resolve_groups(xs.size, m, ng)
        p = noise_base(epsilon, 1)
        hcount, hdata = self._honest_per_group(xs, honest, ng)
        pos = nb_sample(hcount / m, p, rng)
        neg = nb_sample(hcount / m, p, rng)
        payloads = np.repeat(
            np.tile(np.asarray([1, -1], dtype=np.int64), ng),
            _interleave(hdata + pos, neg),
        )
        sizes = hdata + pos + neg
        groups = np.split(payloads, np.cumsum(sizes)[:-1])
        return groups, int(sizes.sum())

    def data_payload(self, x, rng):
        return np.ones(int(x), dtype=np.int64)

    def analyze(self, payloads):
        if payloads.size and not np.all(np.abs(payloads) == 1):
            raise ProtocolError("count analyzer expects +-1 tokens")
        return int(payloads.sum())

    def error_bound(self, epsilon, beta):
        return dlap_threshold(epsilon, 1, beta)

    def expected_msgs(self, epsilon, m):
        p = noise_base(epsilon, 1)
        return 1.0 + 2.0 * p / (m * (1.0 - p))

    def bits_per_msg(self):
        return 2


class SumProtocol(BaseProtocol):
    """Split-and-mix residues mod q with DLap(e^-eps/U) group noise."""

    name = "splitmix-sum"

    def __init__(self, query: Query, n: int, shares: int = SUM_SHARES):
        super().__init__(query)
        if shares < 2:
            raise ParameterError("need at least 2 shares per user")
        self.shares = shares
        # q must exceed twice any honest aggregate magnitude, noise included.
        self.modulus = 1 << max(
            3, (4 * max(1, n) * max(1, query.domain_size)).bit_length()
        )

    def encode(self, totals: np.ndarray, rng) -> np.ndarray:
        """Split each total into ``shares`` uniform residues summing to it."""
        q = self.modulus
        parts = rng.integers(0, q, size=(totals.size, self.shares))
        parts[:, -1] = (totals - parts[:, :-1].sum(axis=1)) % q
        return parts.reshape(-1).astype(np.int64)

    def randomize_level(self, xs, epsilon, m, rng, honest=None, ng=None):
        ng = _resolve_groups(xs.size, m, ng)
        p = noise_base(epsilon, self.query.domain_size)
        if honest is None:
            honest = np.ones(xs.size, dtype=bool)
        hxs = xs[honest]
        z = nb_sample(np.full(hxs.size, 1.0 / m), p, rng) - nb_sample(
            np.full(hxs.size, 1.0 / m), p, rng
        )
        payloads = self.encode((hxs + z) % self.modulus, rng)
        hcount = honest.reshape(ng, xs.size // ng).sum(axis=1)
        groups = np.split(payloads, np.cumsum(hcount * self.shares)[:-1])
        return groups, int(hcount.sum()) * self.shares

    def data_payload(self, x, rng):
        return self.encode(np.asarray([x], dtype=np.int64), rng)

    def analyze(self, payloads):
        q = self.modulus
        if payloads.size and ((payloads < 0).any() or (payloads >= q).any()):
            raise ProtocolError("sum analyzer expects residues in [0, q)")
        total = int(payloads.sum() % q)
        return total - q if total > q // 2 else total

    def error_bound(self, epsilon, beta):
        return dlap_threshold(epsilon, self.query.domain_size, beta)

    def expected_msgs(self, epsilon, m):
        return float(self.shares)

    def bits_per_msg(self):
        return int(math.ceil(math.log2(self.modulus)))


class _TokenVectorProtocol(BaseProtocol):
    """Shared machinery for the per-bin token protocols (hist and tree)."""

    bins: int

    def _data_codes(self, xs: np.ndarray) -> np.ndarray:
        """Per-user data token codes, user-major when multiple per user."""
        raise NotImplementedError

    def _tokens_per_user(self) -> int:
        return 1

    def _noise_p(self, epsilon: float) -> float:
        return noise_base(epsilon, 1)

    def randomize_level(self, xs, epsilon, m, rng, honest=None, ng=None):
        ng = _resolve_groups(xs.size, m, ng)
        p = self._noise_p(epsilon)
        hcount, _ = self._honest_per_group(xs, honest, ng)
        r = (hcount / m)[:, None]
        pos = nb_sample(np.broadcast_to(r, (ng, self.bins)), p, rng)
        neg = nb_sample(np.broadcast_to(r, (ng, self.bins)), p, rng)
        codes = np.arange(1, self.bins + 1, dtype=np.int64)
        pattern = np.tile(np.concatenate([codes, -codes]), ng)
        noise = np.repeat(pattern, np.hstack([pos, neg]).reshape(-1))
        noise_sizes = pos.sum(axis=1) + neg.sum(axis=1)
        noise_groups = np.split(noise, np.cumsum(noise_sizes)[:-1])

        t = self._tokens_per_user()
        if honest is None:
            data = self._data_codes(xs)
        else:
            data = self._data_codes(xs[honest])
        data_groups = np.split(data, np.cumsum(hcount * t)[:-1])

        groups = [
            np.concatenate([d, z]) for d, z in zip(data_groups, noise_groups)
        ]
        total = int(data.size + noise_sizes.sum())
        return groups, total

    def data_payload(self, x, rng):
        return self._data_codes(np.asarray([x], dtype=np.int64))

    def analyze(self, payloads):
        if payloads.size and (payloads == 0).any():
            raise ProtocolError("tokens must be nonzero bin codes")
        bins = np.abs(payloads) - 1
        ok = bins < self.bins
        self.rejected += int(np.count_nonzero(~ok))
        out = np.zeros(self.bins, dtype=np.int64)
        np.add.at(out, bins[ok], np.sign(payloads[ok]))
        return out

    def bits_per_msg(self):
        return int(math.ceil(math.log2(self.bins))) + 1 if self.bins > 1 else 1


class HistProtocol(_TokenVectorProtocol):
    """One data token plus independent per-bin signed noise tokens."""

    name = "perbin-hist"

    def __init__(self, query: Query):
        super().__init__(query)
        self.bins = query.domain_size + 1

    def _data_codes(self, xs):
        return xs + 1

    def error_bound(self, epsilon, beta):
        return dlap_threshold(epsilon, 1, beta / self.bins)

    def expected_msgs(self, epsilon, m):
        p = noise_base(epsilon, 1)
        return 1.0 + 2.0 * self.bins * p / (m * (1.0 - p))


class RangeTreeProtocol(_TokenVectorProtocol):
    """Per-bin histogram tokens over the flattened dyadic-interval bins.

    The per-node budget is split evenly across the tree levels; each user
    sends one data token per level (the interval containing its value).
    """

    name = "tree-hist"

    def __init__(self, query: Query):
        super().__init__(query)
        self.bins = query.num_bins
        self.num_levels = len(query.tree_levels)

    def _data_codes(self, xs):
        cols = [
            offset + (xs >> shift) + 1
            for offset, _, shift in self.query.tree_levels
        ]
        return np.stack(cols, axis=1).reshape(-1)

    def _tokens_per_user(self):
        return self.num_levels

    def _noise_p(self, epsilon):
        return noise_base(epsilon / self.num_levels, 1)

    def error_bound(self, epsilon, beta):
        per_level = dlap_threshold(
            epsilon / self.num_levels, 1, beta / self.bins
        )
        return self.num_levels * per_level

    def expected_msgs(self, epsilon, m):
        p = self._noise_p(epsilon)
        return self.num_levels + 2.0 * self.bins * p / (m * (1.0 - p))


_DEFAULT_BASE = {
    QueryKind.COUNT: "dlap-count",
    QueryKind.SUM: "splitmix-sum",
    QueryKind.HISTOGRAM: "perbin-hist",
    QueryKind.RANGE_TREE: "tree-hist",
}


def make_base(query: Query, n: int, name: str | None = None) -> BaseProtocol:
    """Build the base protocol for a query (by name, or the query's default)."""
    name = name or _DEFAULT_BASE[query.kind]
    if name != _DEFAULT_BASE[query.kind]:
        raise ParameterError(
            f"base protocol {name!r} does not fit {query.kind.value}"
        )
    if query.kind is QueryKind.COUNT:
        return CountProtocol(query)
    if query.kind is QueryKind.SUM:
        return SumProtocol(query, n)
    if query.kind is QueryKind.HISTOGRAM:
        return HistProtocol(query)
    return RangeTreeProtocol(query)
