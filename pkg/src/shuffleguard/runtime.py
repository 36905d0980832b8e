"""Simulated anonymous channels: token-authorized shufflers.

Every tree node (level, group) owns a shuffler guarded by a secret 64-bit
token. Users learn only the tokens of the groups they belong to, so a
corrupted user cannot place messages in any other group's aggregate; a
guessed token is rejected on submission. After all submissions, each inbox
releases a uniformly permuted multiset of its accepted payloads with the
tokens stripped.

Payloads travel in batches: an Envelope carries one sender's whole payload
array for one shuffler, which keeps desk-scale runs vectorized without
changing what the analyzer can observe (it only ever sees the shuffled
multiset).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ShufflerToken:
    """Secret capability for one shuffler; unguessable, unique per node."""

    id: int
    level: int
    group: int


@dataclass(frozen=True)
class Envelope:
    """One sender's payload batch addressed to a shuffler by token id."""

    token: int
    payloads: np.ndarray


@dataclass
class ShufflerInbox:
    token: ShufflerToken
    accepted: list = field(default_factory=list)
    rejected_count: int = 0

    def submit(self, e: Envelope) -> bool:
        """Accept iff the envelope carries this shuffler's token."""
        if e.token != self.token.id:
            self.rejected_count += int(e.payloads.size)
            return False
        self.accepted.append(e.payloads)
        return True

    @property
    def accepted_count(self) -> int:
        return sum(int(a.size) for a in self.accepted)

    def shuffle(self, rng: np.random.Generator) -> np.ndarray:
        """Uniformly permuted multiset of accepted payloads, tokens stripped."""
        if not self.accepted:
            return np.zeros(0, dtype=np.int64)
        out = self.accepted[0] if len(self.accepted) == 1 else np.concatenate(self.accepted)
        if out.size <= 1:
            return out
        return rng.permutation(out)


class TokenTable:
    """The provisioned shuffler tokens of one run, keyed by (level, group)."""

    def __init__(self, nodes: list[tuple[int, int]], rng: np.random.Generator):
        ids: set[int] = set()
        self.by_node: dict[tuple[int, int], ShufflerToken] = {}
        for r, g in nodes:
            tid = int(rng.integers(0, 1 << 63, dtype=np.int64))
            while tid in ids:
                tid = int(rng.integers(0, 1 << 63, dtype=np.int64))
            ids.add(tid)
            self.by_node[(r, g)] = ShufflerToken(tid, r, g)

    def __len__(self) -> int:
        return len(self.by_node)

    def token(self, level: int, group: int) -> ShufflerToken:
        return self.by_node[(level, group)]

    def make_inboxes(self) -> dict[tuple[int, int], ShufflerInbox]:
        return {node: ShufflerInbox(tok) for node, tok in self.by_node.items()}


def provision(plan, rng: np.random.Generator) -> TokenTable:
    """Fresh random tokens for every tree node of a plan."""
    return TokenTable(plan.nodes(), rng)
