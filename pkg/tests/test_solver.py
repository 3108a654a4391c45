import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cmefsp import (
    AdaptiveFSP,
    BudgetError,
    CapacityError,
    Constant,
    InvalidArgumentError,
    MassAction,
    Reaction,
    ReactionNetwork,
    SolverConfig,
    StateSpace,
    assemble,
    birth_death,
    dense_expm,
    local_error_bound,
    lotka_volterra,
    solve_adaptive,
    solve_standard_fsp,
    solve_time_stepping_fsp,
    verify_budget,
)
from cmefsp.statespace import PruneReport, l1_distance

from conftest import pure_death


def capped_oracle(net, cap, x0, t):
    S = StateSpace(np.arange(cap + 1).reshape(-1, 1))
    p0 = np.zeros(cap + 1)
    p0[x0] = 1.0
    return S, dense_expm(assemble(S, net), t) @ p0


# --- budget ---------------------------------------------------------------


@pytest.mark.parametrize(
    "kw, n, bound, passed",
    [
        (dict(tf=10, dt=0.1, alpha=1e-6, eps_time=2e-6, eps_global=1e-3), 100, 4e-4, True),
        (dict(tf=10, dt=0.1, alpha=1e-4, eps_time=2e-4, eps_global=1e-3), 100, 4e-2, False),
        (dict(tf=1, dt=0.3, alpha=0.0, eps_time=0.0, eps_global=1e-9), 4, 0.0, True),
    ],
)
def test_verify_budget_table(kw, n, bound, passed):
    d = verify_budget(SolverConfig(**kw))
    assert d.n_steps == n
    assert d.bound == bound
    assert d.passed is passed


def test_budget_slack_and_balance(caplog):
    d = verify_budget(SolverConfig(tf=10, dt=0.1, alpha=1e-4, eps_time=2e-4, eps_global=1e-3))
    assert d.slack == -3.9e-2
    assert d.balanced
    d = verify_budget(SolverConfig(tf=1, dt=0.1, alpha=1e-6, eps_time=5e-6))
    assert not d.balanced
    assert "exceeds" in caplog.text


def test_eps_time_defaults_to_two_alpha():
    assert SolverConfig(alpha=3e-7).eps_time == 6e-7


def test_config_validation():
    for bad in (dict(tf=0.0), dict(dt=0), dict(alpha=1.0), dict(strategy="x"), dict(boundary="x"), dict(depth=0)):
        with pytest.raises(InvalidArgumentError):
            SolverConfig(**bad)


def test_local_error_bound():
    S = StateSpace([[0]])
    r = PruneReport.empty(S)
    assert local_error_bound(r) == 0
    for m, b in ((0.05, 0.1), (0.20, 0.4)):
        r.pruned_mass = m
        assert local_error_bound(r) == b


# --- adaptive solver ------------------------------------------------------


def test_frozen_network_keeps_point_mass():
    net = ReactionNetwork(["A", "B"], [Reaction({0: 1, 1: 1}, {}, MassAction(1.0))])
    res = solve_adaptive(net, (3, 0), SolverConfig(tf=1, dt=0.25, alpha=1e-3, eps_global=1))
    assert len(res.space) == 1 and res.p.weights.tolist() == [1.0]
    assert all(s.pruned_mass == 0 for s in res.steps)


def test_birth_death_against_dense_oracle():
    net = birth_death(1.0, 1.0, cap=60).network
    cfg = SolverConfig(tf=1, dt=0.1, alpha=1e-8, eps_time=2e-8, eps_global=1e-5)
    res = solve_adaptive(net, (5,), cfg)
    S, ref = capped_oracle(net, 60, 5, 1.0)
    err = l1_distance(res.space, res.p, S, ref)
    assert err <= cfg.n_steps() * (2 * cfg.alpha + cfg.eps_time)
    assert err <= res.cum_bound


def test_step_records_consistent():
    m = birth_death(3.0, 0.5)
    cfg = dataclasses.replace(m.config, tf=2.0, dt=0.1, alpha=1e-5, eps_time=None, eps_global=1e-2, snapshot_every=5)
    res = solve_adaptive(m.network, m.x0, cfg)
    cum = [s.cum_bound for s in res.steps]
    assert all(b >= a for a, b in zip(cum, cum[1:]))
    for s in res.steps:
        assert s.local_bound == 2 * s.pruned_mass
        assert s.pruned_mass <= cfg.alpha
    assert res.cum_bound <= cfg.eps_global
    assert [round(s.t, 12) for s in res.snapshots] == [0.0, 0.5, 1.0, 1.5, 2.0]
    for s in res.snapshots:
        assert abs(s.probs.sum() - 1) <= 1e-12 and (s.probs >= 0).all()
    assert res.t == pytest.approx(2.0)


def test_budget_refusal_and_override():
    m = birth_death()
    cfg = dataclasses.replace(m.config, alpha=1e-3, eps_time=None, eps_global=1e-6)
    with pytest.raises(BudgetError) as exc:
        solve_adaptive(m.network, m.x0, cfg)
    assert not exc.value.decision.passed
    res = solve_adaptive(m.network, m.x0, dataclasses.replace(cfg, override_budget=True))
    assert res.budget_overridden


def test_capacity_error_has_partial():
    lv = lotka_volterra()
    cfg = dataclasses.replace(lv.config, max_states=300)
    with pytest.raises(CapacityError) as exc:
        solve_adaptive(lv.network, lv.x0, cfg)
    assert exc.value.partial.steps is not None


def test_deterministic():
    m = birth_death(2.0, 1.0)
    cfg = dataclasses.replace(m.config, tf=0.5, alpha=1e-6, eps_time=None, eps_global=1e-3)
    a = solve_adaptive(m.network, m.x0, cfg)
    b = solve_adaptive(m.network, m.x0, cfg)
    assert a.space.as_set() == b.space.as_set()
    np.testing.assert_array_equal(a.p.weights, b.p.weights)
    assert [s.cum_bound for s in a.steps] == [s.cum_bound for s in b.steps]


def test_stationary_poisson():
    lam, mu = 4.0, 1.0
    m = birth_death(lam, mu, x0=0)
    cfg = dataclasses.replace(m.config, tf=20.0, dt=0.5, alpha=1e-9, eps_time=None, eps_global=1e-6)
    res = solve_adaptive(m.network, m.x0, cfg)
    x = res.space.states[:, 0]
    assert np.abs(res.p.weights - stats.poisson.pmf(x, lam / mu)).sum() + (1 - stats.poisson.pmf(x, lam / mu).sum()) <= 1e-5


def test_pure_death_drains_monotonically():
    m = birth_death(0.0, 1.0, x0=6)
    cfg = dataclasses.replace(m.config, tf=3.0, dt=0.25, snapshot_every=1)
    res = solve_adaptive(m.network, m.x0, cfg)
    p0 = [float(s.probs[s.states[:, 0] == 0].sum()) for s in res.snapshots]
    assert all(b >= a - 1e-12 for a, b in zip(p0, p0[1:]))
    assert p0[-1] == pytest.approx((1 - math.exp(-3.0)) ** 6, abs=1e-7)


def test_frozen_birth_death():
    m = birth_death(0.0, 0.0, x0=4)
    res = solve_adaptive(m.network, m.x0, m.config)
    assert res.space.as_set() == {(4,)} and res.p.weights.tolist() == [1.0]


def test_strategies_run():
    m = birth_death(5.0, 1.0)
    for strategy in ("quantile", "prune_to_mass", "fixed_threshold", "none"):
        cfg = dataclasses.replace(m.config, tf=1.0, dt=0.1, alpha=1e-6, eps_time=None, eps_global=1e-3,
                                  strategy=strategy, theta=1e-9)
        res = solve_adaptive(m.network, m.x0, cfg)
        assert abs(res.p.weights.sum() - 1) <= 1e-12


def test_absorbing_mode_records_leak():
    m = birth_death(5.0, 1.0)
    cfg = dataclasses.replace(m.config, boundary="absorbing", adaptive_expand=False, depth=1, alpha=1e-6,
                              eps_time=None, eps_global=1.0)
    res = solve_adaptive(m.network, m.x0, cfg)
    assert sum(s.leaked_mass for s in res.steps) > 0
    assert res.cum_bound >= 2 * sum(s.leaked_mass for s in res.steps)


def test_adaptive_expansion_tracks_boundary():
    m = birth_death(20.0, 1.0)
    fixed = dataclasses.replace(m.config, depth=1, adaptive_expand=False, alpha=1e-8, eps_time=None, eps_global=1e-5)
    adapt = dataclasses.replace(fixed, adaptive_expand=True)
    net = birth_death(20.0, 1.0, cap=120).network
    S, ref = capped_oracle(net, 120, 5, 1.0)
    r_fixed = solve_adaptive(m.network, m.x0, fixed)
    r_adapt = solve_adaptive(m.network, m.x0, adapt)
    assert sum(s.boundary_flux for s in r_fixed.steps) > 1e-3
    assert l1_distance(r_adapt.space, r_adapt.p, S, ref) <= 1e-6


def test_driver_step_by_step():
    m = birth_death()
    drv = AdaptiveFSP(m.network, m.x0, dataclasses.replace(m.config, tf=0.2, dt=0.1))
    drv.step()
    assert not drv.done
    drv.step()
    assert drv.done and len(drv.result().steps) == 2
    with pytest.raises(InvalidArgumentError):
        AdaptiveFSP(m.network, (1, 2), m.config)


@given(st.floats(0.0, 1e-3), st.integers(1, 4))
def test_prune_bound_per_step(alpha, every):
    m = birth_death(3.0, 1.0)
    cfg = dataclasses.replace(m.config, tf=0.6, dt=0.1, alpha=alpha, eps_time=None, eps_global=1.0, prune_every=every)
    res = solve_adaptive(m.network, m.x0, cfg)
    for k, s in enumerate(res.steps, start=1):
        assert s.local_bound == 2 * s.pruned_mass
        if k % every:
            assert s.pruned_mass == 0
    assert abs(res.p.weights.sum() - 1) <= 1e-12


# --- baselines ------------------------------------------------------------


def test_standard_fsp_birth_death():
    res = solve_standard_fsp(birth_death(2.0, 1.0).network, (3,), 1.0, 1e-6)
    assert res.leaked_mass <= 1e-6


def test_standard_fsp_pure_death():
    res = solve_standard_fsp(pure_death(1.0), (3,), 1.0, 1e-12)
    assert res.space.as_set() == {(0,), (1,), (2,), (3,)}
    assert res.leaked_mass <= 1e-12


def test_standard_fsp_eps_one():
    res = solve_standard_fsp(birth_death().network, (5,), 1.0, 1.0)
    assert len(res.space) == 1 and len(res.steps) == 1


def test_time_stepping_fsp():
    m = birth_death(2.0, 1.0)
    res = solve_time_stepping_fsp(m.network, m.x0, dataclasses.replace(m.config, tf=1.0, dt=0.1), 1e-6)
    assert res.leaked_mass <= 1e-6 + 1e-10
    net = birth_death(2.0, 1.0, cap=60).network
    S, ref = capped_oracle(net, 60, 5, 1.0)
    assert l1_distance(res.space, res.p, S, ref) <= 2e-6


def test_constant_degradation_law_runs():
    net = ReactionNetwork(["X"], [Reaction({}, {0: 1}, Constant(1.0)), Reaction({0: 1}, {}, Constant(2.0))])
    res = solve_adaptive(net, (3,), SolverConfig(tf=1.0, dt=0.1, alpha=1e-6, eps_global=1e-3))
    assert abs(res.p.weights.sum() - 1) <= 1e-12
