"""Gillespie direct-method SSA used as a statistical oracle.

Random numbers come from a counter-based hash: the two uniforms consumed by
event ``j`` of a trajectory with stream key ``s`` are a pure function of
``(s, j)``.  Trajectory ``i`` of an ensemble uses key
``trajectory_seed(base_seed, i)``, so ensembles are bit-reproducible and
independent of how trajectories are batched.  That is what lets the
ensemble code advance every trajectory in lockstep with numpy while staying
exact per trajectory.

The hash is the SplitMix64 finaliser applied to the key mixed with the
counter.  It is fixed; changing it changes every recorded ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "Trajectory",
    "EnsembleStats",
    "trajectory_seed",
    "ssa_trajectory",
    "simulate_grid",
    "ensemble_stats",
    "fsp_mean",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def trajectory_seed(base_seed: int, i) -> np.ndarray:
    """Stream key of trajectory ``i`` in an ensemble seeded with ``base_seed``."""
    base = _mix64(np.uint64(base_seed % 2**64))
    with np.errstate(over="ignore"):
        return _mix64(base ^ _mix64(np.asarray(i, dtype=np.uint64)))


def _uniforms(keys, counters):
    """Two uniforms in (0, 1] per (key, counter) pair."""
    with np.errstate(over="ignore"):
        c = np.asarray(counters, dtype=np.uint64) * np.uint64(2)
        h1 = _mix64(keys ^ _mix64(c))
        h2 = _mix64(keys ^ _mix64(c + np.uint64(1)))
    scale = 1.0 / 2**53
    u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 1.0) * scale
    u2 = ((h2 >> np.uint64(11)).astype(np.float64) + 1.0) * scale
    return u1, u2


@dataclass
class Trajectory:
    times: np.ndarray  # event times, strictly increasing
    states: np.ndarray  # states[k] holds after times[k]; states[0] is x0 at t0
    reactions: np.ndarray  # reaction index fired at each event
    grid: np.ndarray
    grid_states: np.ndarray


@dataclass
class EnsembleStats:
    grid: np.ndarray
    mean: np.ndarray  # (n_grid, n_species)
    var: np.ndarray
    n: int

    @property
    def sem(self) -> np.ndarray:
        return np.sqrt(self.var / self.n)


def _run(network, x0, tf, keys, grid, events=False, t0=0.0):
    """Advance all trajectories in lockstep; returns grid states (n, G, N)."""
    n = len(keys)
    grid = np.asarray(grid, dtype=float)
    G = len(grid)
    X = np.tile(np.asarray(x0, dtype=np.int64), (n, 1))
    t = np.full(n, float(t0))
    counter = np.zeros(n, dtype=np.uint64)
    nxt = np.zeros(n, dtype=np.int64)
    out = np.zeros((n, G, network.n_species), dtype=np.int64)
    stoich = network.stoich
    log_t, log_r, log_x = [], [], []
    active = np.arange(n)
    while len(active):
        props = network.propensities(X[active])
        a0 = props.sum(axis=1)
        u1, u2 = _uniforms(keys[active], counter[active])
        with np.errstate(divide="ignore"):
            tau = np.where(a0 > 0, -np.log(u1) / np.where(a0 > 0, a0, 1.0), np.inf)
        t_new = t[active] + tau
        # right-continuous recording: grid points before the next event see the current state
        k_new = np.searchsorted(grid, t_new, side="left")
        while True:
            rec = nxt[active] < k_new
            if not rec.any():
                break
            ids = active[rec]
            out[ids, nxt[ids]] = X[ids]
            nxt[ids] += 1
        fire = t_new <= tf
        ids = active[fire]
        if len(ids):
            pf = props[fire]
            cum = np.cumsum(pf, axis=1)
            target = u2[fire] * a0[fire]
            r = np.minimum((cum < target[:, None]).sum(axis=1), network.n_reactions - 1)
            # guard against landing on a zero-propensity reaction through rounding
            r = np.where(pf[np.arange(len(r)), r] > 0, r, np.argmax(pf > 0, axis=1))
            X[ids] += stoich[r]
            t[ids] = t_new[fire]
            counter[ids] += np.uint64(1)
            if events:
                log_t.append(t_new[fire].copy())
                log_r.append(r.copy())
                log_x.append(X[ids].copy())
        active = ids
    if events:
        return out, log_t, log_r, log_x
    return out


def ssa_trajectory(network, x0, tf: float, rng_seed: int, grid=None, t0: float = 0.0) -> Trajectory:
    """One exact SSA path from ``x0`` up to ``tf`` using stream key ``rng_seed``."""
    grid = np.linspace(t0, tf, 21) if grid is None else np.asarray(grid, dtype=float)
    keys = np.array([rng_seed % 2**64], dtype=np.uint64)
    out, lt, lr, lx = _run(network, x0, tf, keys, grid, events=True, t0=t0)
    times = np.concatenate([[t0]] + lt) if lt else np.array([t0])
    states = np.vstack([np.asarray(x0, dtype=np.int64).reshape(1, -1)] + lx)
    reactions = np.concatenate(lr) if lr else np.zeros(0, dtype=np.int64)
    return Trajectory(times, states, reactions, grid, out[0])


def simulate_grid(network, x0, tf: float, grid, n: int, base_seed: int, batch: int = 20_000, t0=0.0):
    """Grid-sampled states of ``n`` trajectories, shape (n, len(grid), n_species)."""
    parts = []
    for lo in range(0, n, batch):
        keys = trajectory_seed(base_seed, np.arange(lo, min(n, lo + batch), dtype=np.uint64))
        parts.append(_run(network, x0, tf, keys, grid, t0=t0))
    return np.concatenate(parts, axis=0)


def ensemble_stats(network, x0, tf: float, grid, n: int, base_seed: int, t0=0.0) -> EnsembleStats:
    """Per-species mean and variance over ``n`` SSA trajectories on ``grid``."""
    if n < 2:
        raise InvalidArgumentError("ensemble needs at least two trajectories")
    grid = np.asarray(grid, dtype=float)
    if np.any(grid > tf) or np.any(grid < t0):
        raise InvalidArgumentError("grid times must lie in [t0, tf]")
    samples = simulate_grid(network, x0, tf, grid, n, base_seed, t0=t0).astype(float)
    return EnsembleStats(grid, samples.mean(axis=0), samples.var(axis=0, ddof=1), n)


def fsp_mean(result, species: int):
    """Expected count of ``species`` at every recorded snapshot: (times, means)."""
    if not result.snapshots:
        raise InvalidArgumentError("solve result has no snapshots; set snapshot_every > 0")
    times = np.array([s.t for s in result.snapshots])
    means = np.array([float(s.probs @ s.states[:, species]) for s in result.snapshots])
    return times, means
