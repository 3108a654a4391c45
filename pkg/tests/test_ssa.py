import dataclasses

import numpy as np
import pytest
from scipy import stats

from cmefsp import (
    InvalidArgumentError,
    MassAction,
    Reaction,
    ReactionNetwork,
    ensemble_stats,
    fsp_mean,
    lotka_volterra,
    michaelis_menten,
    solve_adaptive,
    ssa_trajectory,
)
from cmefsp.solver import Snapshot, SolveResult
from cmefsp.ssa import simulate_grid, trajectory_seed

from conftest import pure_birth, pure_death

FROZEN = ReactionNetwork(["A", "B"], [Reaction({0: 1, 1: 1}, {}, MassAction(1.0))])


def test_frozen_trajectory():
    tr = ssa_trajectory(FROZEN, (2, 0), 5.0, 1)
    assert tr.times.tolist() == [0.0] and tr.reactions.size == 0
    assert (tr.grid_states == [2, 0]).all()


def test_trajectory_consistency():
    lv = lotka_volterra().network
    tr = ssa_trajectory(lv, (50, 100), 2.0, 11)
    assert np.all(np.diff(tr.times) > 0)
    steps = np.diff(tr.states, axis=0)
    np.testing.assert_array_equal(steps, lv.stoich[tr.reactions])
    # right-continuous grid sampling
    for t, x in zip(tr.grid, tr.grid_states):
        k = np.searchsorted(tr.times, t, side="right") - 1
        np.testing.assert_array_equal(x, tr.states[k])


def test_pure_death_single_event_is_exponential():
    net = pure_death(1.0)
    times = []
    for s in range(2000):
        tr = ssa_trajectory(net, (1,), 50.0, s)
        assert len(tr.reactions) == 1
        times.append(tr.times[1])
    assert stats.kstest(times, "expon").pvalue > 1e-3


def test_first_reaction_frequencies():
    lv = lotka_volterra().network
    paths = (ssa_trajectory(lv, (50, 100), 0.05, s) for s in range(3000))
    first = np.array([tr.reactions[0] for tr in paths if len(tr.reactions)])
    p3 = (first == 2).mean()
    se = np.sqrt((60 / 90) * (30 / 90) / len(first))
    assert abs(p3 - 60 / 90) <= 4 * se


def test_frozen_ensemble():
    st = ensemble_stats(FROZEN, (2, 0), 1.0, [0.0, 0.5, 1.0], 10, 0)
    np.testing.assert_array_equal(st.mean, [[2, 0]] * 3)
    np.testing.assert_array_equal(st.var, 0.0)


def test_pure_birth_poisson_mean():
    st = ensemble_stats(pure_birth(3.0), (0,), 2.0, [2.0], 10000, 5)
    assert abs(st.mean[0, 0] - 6.0) <= 4 * st.sem[0, 0]
    assert st.sem[0, 0] == pytest.approx(np.sqrt(st.var[0, 0] / 10000))


def test_seed_reproducibility_and_batching():
    lv = lotka_volterra().network
    grid = [0.5, 1.0]
    a = simulate_grid(lv, (50, 100), 1.0, grid, 300, 9)
    b = simulate_grid(lv, (50, 100), 1.0, grid, 300, 9, batch=7)
    np.testing.assert_array_equal(a, b)
    single = ssa_trajectory(lv, (50, 100), 1.0, int(trajectory_seed(9, 17)), grid=grid)
    np.testing.assert_array_equal(single.grid_states, a[17])


def test_different_seeds_consistent():
    net = lotka_volterra().network
    s1 = ensemble_stats(net, (50, 100), 1.0, [1.0], 2000, 1)
    s2 = ensemble_stats(net, (50, 100), 1.0, [1.0], 2000, 2)
    assert not np.array_equal(s1.mean, s2.mean)
    comb = np.sqrt(s1.sem**2 + s2.sem**2)
    assert (np.abs(s1.mean - s2.mean) <= 4 * comb).all()


def test_mm_conservation_per_trajectory():
    mm = michaelis_menten().network
    X = simulate_grid(mm, (50, 10, 1, 1), 30.0, np.linspace(0, 30, 11), 200, 4)
    assert (X[..., 0] + X[..., 2] == 51).all()
    assert (X[..., 1] + X[..., 2] + X[..., 3] == 12).all()


def test_ensemble_validation():
    with pytest.raises(InvalidArgumentError):
        ensemble_stats(FROZEN, (1, 1), 1.0, [0.5], 1, 0)
    with pytest.raises(InvalidArgumentError):
        ensemble_stats(FROZEN, (1, 1), 1.0, [2.0], 5, 0)


def test_fsp_mean_simple():
    res = SolveResult(None, None, snapshots=[
        Snapshot(0.0, np.array([[3, 1]]), np.array([1.0])),
        Snapshot(1.0, np.array([[0, 0], [2, 0]]), np.array([0.5, 0.5])),
    ])
    t, m = fsp_mean(res, 0)
    assert t.tolist() == [0.0, 1.0] and m.tolist() == [3.0, 1.0]
    with pytest.raises(InvalidArgumentError):
        fsp_mean(SolveResult(None, None), 0)


def test_mm_final_product_mean_matches_ssa():
    m = michaelis_menten()
    cfg = dataclasses.replace(m.config, snapshot_every=m.config.n_steps())
    res = solve_adaptive(m.network, m.x0, cfg)
    t, mean_p = fsp_mean(res, 3)
    st = ensemble_stats(m.network, m.x0, cfg.tf, [cfg.tf], 1000, 123)
    assert abs(mean_p[-1] - st.mean[0, 3]) <= 3 * st.sem[0, 3]
