"""Truncated state sets, reachability expansion and probability pruning.

States are stored as rows of an int64 array.  Position lookups go through a
sorted array of raw-byte row keys, so membership tests for thousands of
candidate states are a single ``searchsorted`` call.

Every structural change produces a new :class:`StateSpace` with a fresh
generation number.  Probability vectors and generators carry the generation
they were built against, which is how stale combinations are caught.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    CapacityError,
    DegeneratePruneError,
    InvalidArgumentError,
    StaleSpaceError,
)

__all__ = [
    "StateSpace",
    "ProbabilityVector",
    "PruneReport",
    "expand",
    "quantile_select",
    "prune_and_renormalize",
    "prune_to_mass",
    "fixed_threshold_prune",
    "DEFAULT_M_MAX",
    "QUANTILE_RULES",
    "l1_distance",
]

DEFAULT_M_MAX = 0.5
QUANTILE_RULES = ("reach", "at_most")

_generations = itertools.count(1)


def _row_keys(states: np.ndarray) -> np.ndarray:
    states = np.ascontiguousarray(states, dtype=np.int64)
    width = states.shape[1] * states.itemsize
    return states.view(np.dtype((np.void, width))).ravel()


class StateSpace:
    """Ordered set of count vectors with a state <-> position map."""

    def __init__(self, states, generation=None):
        states = np.array(states, dtype=np.int64, ndmin=2)
        if states.size and states.min() < 0:
            raise InvalidArgumentError("states must have nonnegative counts")
        keys = _row_keys(states)
        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        if len(sorted_keys) > 1 and np.any(sorted_keys[1:] == sorted_keys[:-1]):
            raise InvalidArgumentError("state space contains duplicate states")
        states.setflags(write=False)
        self.states = states
        self._order = order
        self._sorted_keys = sorted_keys
        self.generation = next(_generations) if generation is None else generation

    def __len__(self):
        return self.states.shape[0]

    def __repr__(self):
        return f"StateSpace(n={len(self)}, n_species={self.n_species}, generation={self.generation})"

    @property
    def n_species(self) -> int:
        return self.states.shape[1]

    def state(self, i: int) -> tuple:
        return tuple(int(v) for v in self.states[i])

    def lookup(self, states) -> np.ndarray:
        """Positions of ``states`` in this space, -1 where absent."""
        states = np.array(states, dtype=np.int64, ndmin=2)
        if len(states) == 0 or len(self) == 0:
            return np.full(len(states), -1, dtype=np.int64)
        q = _row_keys(states)
        pos = np.searchsorted(self._sorted_keys, q)
        pos = np.minimum(pos, len(self._sorted_keys) - 1)
        hit = self._sorted_keys[pos] == q
        return np.where(hit, self._order[pos], -1)

    def index(self, state) -> int:
        i = int(self.lookup([state])[0])
        if i < 0:
            raise KeyError(tuple(state))
        return i

    def __contains__(self, state):
        return self.lookup([state])[0] >= 0

    def appended(self, new_states) -> "StateSpace":
        new_states = np.array(new_states, dtype=np.int64, ndmin=2).reshape(-1, self.n_species)
        return StateSpace(np.vstack([self.states, new_states]))

    def subset(self, keep) -> "StateSpace":
        """New space holding the rows selected by boolean mask ``keep``, order preserved."""
        return StateSpace(self.states[np.asarray(keep, dtype=bool)])

    def as_set(self):
        return {tuple(int(v) for v in row) for row in self.states}


@dataclass
class ProbabilityVector:
    weights: np.ndarray
    generation: int

    @classmethod
    def point_mass(cls, space: StateSpace, i: int = 0):
        w = np.zeros(len(space))
        w[i] = 1.0
        return cls(w, space.generation)

    def check(self, space: StateSpace):
        if self.generation != space.generation or len(self.weights) != len(space):
            raise StaleSpaceError(
                f"probability vector (generation {self.generation}, n={len(self.weights)}) "
                f"does not match {space!r}"
            )

    def total(self) -> float:
        return float(np.sum(self.weights))

    def padded(self, space: StateSpace) -> "ProbabilityVector":
        """Zero-extend for a space that appended states after the current ones."""
        extra = len(space) - len(self.weights)
        if extra < 0:
            raise StaleSpaceError("cannot pad to a smaller space")
        return ProbabilityVector(np.concatenate([self.weights, np.zeros(extra)]), space.generation)


@dataclass
class PruneReport:
    """Outcome of a pruning selection, before it is applied."""

    positions: np.ndarray
    removed: np.ndarray
    pruned_mass: float
    threshold: float
    tie_inclusive: bool
    generation: int
    capped: bool = False
    strategy: str = "quantile"

    @property
    def local_error_bound(self) -> float:
        return 2.0 * self.pruned_mass

    @classmethod
    def empty(cls, space: StateSpace, strategy="quantile", capped=False, tie_inclusive=True):
        return cls(
            positions=np.zeros(0, dtype=np.int64),
            removed=np.zeros((0, space.n_species), dtype=np.int64),
            pruned_mass=0.0,
            threshold=0.0,
            tie_inclusive=tie_inclusive,
            generation=space.generation,
            capped=capped,
            strategy=strategy,
        )


def _report(space, p, positions, threshold, tie_inclusive, strategy):
    positions = np.sort(np.asarray(positions, dtype=np.int64))
    return PruneReport(
        positions=positions,
        removed=space.states[positions].copy(),
        pruned_mass=float(np.sum(p.weights[positions])),
        threshold=float(threshold),
        tie_inclusive=tie_inclusive,
        generation=space.generation,
        strategy=strategy,
    )


def expand(space: StateSpace, network, depth: int = 1, max_states=None):
    """Add every state reachable in at most ``depth`` reaction firings.

    A reaction only fires from a state where its propensity is positive.
    New states are appended after the existing ones in discovery order, so
    existing positions stay valid.  Returns ``(new_space, added_states)``.
    """
    if len(space) == 0:
        raise InvalidArgumentError("cannot expand an empty state space")
    if depth < 1:
        raise InvalidArgumentError(f"expansion depth must be >= 1, got {depth}")
    stoich = network.stoich
    frontier = space.states
    known = space
    found = []
    for _ in range(depth):
        props = network.propensities(frontier)
        cands = []
        for k in range(network.n_reactions):
            fire = props[:, k] > 0
            if fire.any():
                cands.append(frontier[fire] + stoich[k])
        if not cands:
            break
        cand = np.vstack(cands)
        cand = cand[(cand >= 0).all(axis=1)]
        cand = cand[known.lookup(cand) < 0]
        if len(cand) == 0:
            break
        _, first = np.unique(_row_keys(cand), return_index=True)
        cand = cand[np.sort(first)]
        found.append(cand)
        known = StateSpace(np.vstack([known.states, cand]))
        if max_states is not None and len(known) > max_states:
            raise CapacityError(max_states, len(known))
        frontier = cand
    if not found:
        return space, np.zeros((0, space.n_species), dtype=np.int64)
    return known, np.vstack(found)


def quantile_select(
    space: StateSpace,
    p: ProbabilityVector,
    alpha: float,
    tie_inclusive: bool = True,
    m_max: float = DEFAULT_M_MAX,
    rule: str = "reach",
) -> PruneReport:
    """Select the bottom-alpha fraction of probability mass.

    States are sorted ascending by weight (ties by position).  Under the
    default ``rule="reach"``, ``k*`` is the first sorted position whose
    cumulative mass reaches ``alpha`` and the threshold is the weight found
    there, so the selected mass can exceed ``alpha``.  In tie-inclusive mode
    every state at or below the threshold is selected; in positional mode
    exactly the first ``k*`` states are.  A selection heavier than ``m_max``
    falls back to positional mode, and if that is still too heavy nothing is
    selected and the report is flagged ``capped``.

    ``rule="at_most"`` instead picks the largest threshold whose selection
    weighs no more than ``alpha`` (whole tie groups when tie-inclusive).
    """
    if not (0 <= alpha < 1):
        raise InvalidArgumentError(f"alpha must lie in [0, 1), got {alpha}")
    if rule not in QUANTILE_RULES:
        raise InvalidArgumentError(f"rule must be one of {QUANTILE_RULES}, got {rule!r}")
    p.check(space)
    w = p.weights
    if alpha == 0 or len(w) == 0:
        return PruneReport.empty(space, tie_inclusive=tie_inclusive)
    order = np.argsort(w, kind="stable")
    ws = w[order]
    cum = np.cumsum(ws)

    if rule == "at_most":
        k = int(np.searchsorted(cum, alpha, side="right"))  # prefix length with cum <= alpha
        if tie_inclusive:
            # back off to the end of the last complete tie group
            while 0 < k < len(ws) and ws[k] == ws[k - 1]:
                k -= 1
        k = min(k, len(w) - 1)
        if k == 0:
            return PruneReport.empty(space, tie_inclusive=tie_inclusive)
        rep = _report(space, p, order[:k], ws[k - 1], tie_inclusive, "quantile")
        if rep.pruned_mass <= m_max:
            return rep
        return PruneReport.empty(space, capped=True, tie_inclusive=tie_inclusive)

    kstar = min(int(np.searchsorted(cum, alpha, side="left")), len(w) - 1)
    q = ws[kstar]
    if tie_inclusive:
        rep = _report(space, p, np.flatnonzero(w <= q), q, True, "quantile")
        if rep.pruned_mass <= m_max and len(rep.positions) < len(w):
            return rep
    # positional selection always leaves the heaviest state in place
    rep = _report(space, p, order[: min(kstar + 1, len(w) - 1)], q, False, "quantile")
    if rep.pruned_mass <= m_max and len(rep.positions):
        return rep
    return PruneReport.empty(space, capped=True, tie_inclusive=False)


def prune_to_mass(space: StateSpace, p: ProbabilityVector, target: float) -> PruneReport:
    """Greedy removal of the lightest states while the removed mass stays <= target."""
    if not (0 <= target < 1):
        raise InvalidArgumentError(f"target must lie in [0, 1), got {target}")
    p.check(space)
    w = p.weights
    order = np.argsort(w, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, target, side="right"))
    k = min(k, len(w) - 1)
    thr = w[order[k - 1]] if k else 0.0
    return _report(space, p, order[:k], thr, False, "prune_to_mass")


def fixed_threshold_prune(space: StateSpace, p: ProbabilityVector, theta: float) -> PruneReport:
    """Remove every state with weight strictly below ``theta``."""
    if theta < 0:
        raise InvalidArgumentError(f"theta must be >= 0, got {theta}")
    p.check(space)
    return _report(space, p, np.flatnonzero(p.weights < theta), theta, False, "fixed_threshold")


def prune_and_renormalize(space: StateSpace, p: ProbabilityVector, report: PruneReport):
    """Apply a prune report: drop the selected states and rescale by 1/(1 - m)."""
    p.check(space)
    if report.generation != space.generation:
        raise StaleSpaceError("prune report was computed against a different state space")
    if len(report.positions) == 0:
        return space, p
    m = report.pruned_mass
    if m >= 1 or len(report.positions) >= len(space):
        raise DegeneratePruneError(f"pruned mass {m} leaves nothing to renormalize")
    keep = np.ones(len(space), dtype=bool)
    keep[report.positions] = False
    new_space = space.subset(keep)
    return new_space, ProbabilityVector(p.weights[keep] / (1.0 - m), new_space.generation)


def l1_distance(space_a: StateSpace, wa, space_b: StateSpace, wb) -> float:
    """l1 distance between two distributions on possibly different spaces.

    States missing from one side count as zero weight there.
    """
    wa = np.asarray(getattr(wa, "weights", wa), dtype=float)
    wb = np.asarray(getattr(wb, "weights", wb), dtype=float)
    pos = space_b.lookup(space_a.states)
    shared = pos >= 0
    d = np.abs(wa[shared] - wb[pos[shared]]).sum()
    d += np.abs(wa[~shared]).sum()
    only_b = np.ones(len(space_b), dtype=bool)
    only_b[pos[shared]] = False
    d += np.abs(wb[only_b]).sum()
    return float(d)
