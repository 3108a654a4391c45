"""Sparse CME generator over a truncated state space.

Column ``j`` of the generator holds the outflow of state ``j``: entry
``(i, j)`` is the rate of jumping from state ``j`` to state ``i``.  Off-diagonal
rates are kept in CSC form separately from the diagonal, so the incremental
update can slice and extend the off-diagonal block and then recompute the
diagonal in one vector operation.

Two boundary conventions are supported:

* ``closed``: the diagonal only counts outflow to states inside the space,
  so every column sums to zero and probability is conserved.
* ``absorbing``: the diagonal carries the full outflow, so mass that would
  leave the space is lost and ``1 - sum(p)`` measures the truncation leak.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, StaleSpaceError
from .statespace import ProbabilityVector, StateSpace

__all__ = ["SparseGenerator", "assemble", "update_generator", "embed", "dump_coo", "BOUNDARY_MODES"]

BOUNDARY_MODES = ("closed", "absorbing")


@dataclass
class SparseGenerator:
    offdiag: sp.csc_matrix
    diag: np.ndarray
    # total propensity out of each state, including jumps leaving the space
    totals: np.ndarray
    mode: str
    space: StateSpace

    @property
    def generation(self) -> int:
        return self.space.generation

    @property
    def dimension(self) -> int:
        return self.offdiag.shape[0]

    @property
    def matrix(self) -> sp.csc_matrix:
        return (self.offdiag + sp.diags(self.diag, format="csc")).tocsc()

    @property
    def exit_rates(self) -> np.ndarray:
        """Rate at which each state sends probability outside the space."""
        return np.maximum(self.totals - _colsums(self.offdiag), 0.0)

    def column_sums(self) -> np.ndarray:
        return _colsums(self.offdiag) + self.diag

    def nnz(self) -> int:
        return int(self.offdiag.nnz + np.count_nonzero(self.diag))

    def __matmul__(self, v):
        return self.offdiag @ v + self.diag * v


def _colsums(m) -> np.ndarray:
    return np.asarray(m.sum(axis=0)).ravel()


def _check_mode(mode):
    if mode not in BOUNDARY_MODES:
        raise InvalidArgumentError(f"boundary mode must be one of {BOUNDARY_MODES}, got {mode!r}")


def _outflow_entries(states, space, network, col_offset=0):
    """(rows, cols, vals) for jumps out of ``states`` that land inside ``space``."""
    props = network.propensities(states)
    rows, cols, vals = [], [], []
    src = np.arange(len(states)) + col_offset
    for k in range(network.n_reactions):
        fire = props[:, k] > 0
        if not fire.any():
            continue
        pos = space.lookup(states[fire] + network.stoich[k])
        hit = pos >= 0
        rows.append(pos[hit])
        cols.append(src[fire][hit])
        vals.append(props[fire, k][hit])
    return props, rows, cols, vals


def _finish(offdiag, totals, mode, space):
    offdiag = offdiag.tocsc()
    offdiag.sum_duplicates()
    offdiag.eliminate_zeros()
    if mode == "closed":
        diag = -_colsums(offdiag)
    else:
        diag = -totals
    return SparseGenerator(offdiag, diag, totals, mode, space)


def _coo(n, rows, cols, vals):
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    return sp.coo_matrix((v, (r, c)), shape=(n, n))


def assemble(space: StateSpace, network, mode: str = "closed") -> SparseGenerator:
    """Build the truncated generator from scratch."""
    _check_mode(mode)
    if len(space) == 0:
        raise InvalidArgumentError("cannot assemble a generator on an empty space")
    props, rows, cols, vals = _outflow_entries(space.states, space, network)
    return _finish(_coo(len(space), rows, cols, vals), props.sum(axis=1), mode, space)


def update_generator(A: SparseGenerator, space_after: StateSpace, removed, added, network) -> SparseGenerator:
    """Bring ``A`` up to date after removing and adding states.

    ``space_after`` must list the retained states of ``A.space`` in their
    original order followed by ``added``.  Retained-to-retained rates are
    copied from ``A``; only columns of the new states and the inflow from
    retained states into new ones are evaluated.  All diagonals are then
    recomputed.
    """
    old = A.space
    n_sp = old.n_species
    removed = np.array(removed, dtype=np.int64, ndmin=2).reshape(-1, n_sp)
    added = np.array(added, dtype=np.int64, ndmin=2).reshape(-1, n_sp)
    if len(removed) == 0 and len(added) == 0 and space_after.generation == old.generation:
        return A

    keep = np.ones(len(old), dtype=bool)
    if len(removed):
        rpos = old.lookup(removed)
        if np.any(rpos < 0):
            raise StaleSpaceError("removed states are not part of the generator's space")
        keep[rpos] = False
    ret_idx = np.flatnonzero(keep)
    n_ret = len(ret_idx)
    n = n_ret + len(added)
    if len(space_after) != n or not (
        np.array_equal(space_after.states[:n_ret], old.states[ret_idx])
        and np.array_equal(space_after.states[n_ret:], added)
    ):
        raise StaleSpaceError("space_after is not (old space minus removed) followed by added")

    ret = A.offdiag[ret_idx][:, ret_idx].tocoo()
    rows, cols, vals = [ret.row], [ret.col], [ret.data]
    totals = A.totals[ret_idx]
    if len(added):
        props_new, r, c, v = _outflow_entries(added, space_after, network, col_offset=n_ret)
        rows += r
        cols += c
        vals += v
        # inflow from retained states into the new ones
        dest = np.arange(n_ret, n)
        for k in range(network.n_reactions):
            src = added - network.stoich[k]
            ok = (src >= 0).all(axis=1)
            if not ok.any():
                continue
            pos = space_after.lookup(src[ok])
            hit = (pos >= 0) & (pos < n_ret)
            if not hit.any():
                continue
            rate = network.propensities(src[ok][hit])[:, k]
            fire = rate > 0
            rows.append(dest[ok][hit][fire])
            cols.append(pos[hit][fire])
            vals.append(rate[fire])
        totals = np.concatenate([totals, props_new.sum(axis=1)])
    return _finish(_coo(n, rows, cols, vals), totals, A.mode, space_after)


def embed(p_old: ProbabilityVector, space_old: StateSpace, space_new: StateSpace) -> ProbabilityVector:
    """Carry weights across spaces by state identity; new states get zero."""
    p_old.check(space_old)
    pos = space_old.lookup(space_new.states)
    w = np.where(pos >= 0, p_old.weights[np.maximum(pos, 0)], 0.0)
    return ProbabilityVector(w, space_new.generation)


def dump_coo(A: SparseGenerator, fh):
    """Write the generator as ``row col rate`` lines (diagonal included)."""
    m = A.matrix.tocoo()
    order = np.lexsort((m.row, m.col))
    for i in order:
        fh.write(f"{m.row[i]} {m.col[i]} {m.data[i]:.17g}\n")
