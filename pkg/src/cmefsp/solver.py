"""Adaptive FSP driver with quantile pruning and error bookkeeping.

One step of :class:`AdaptiveFSP` runs, in order: expand the state space,
bring the generator up to date (pending removals and new states in a single
incremental update), evolve with ``expmv``, prune, renormalise and advance
time.  Each step appends a :class:`StepRecord`; the running bound is the sum
of the per-step ``2 m`` pruning errors and the Krylov error estimates.

Two classical baselines are provided for comparison:
:func:`solve_standard_fsp` (expand until the leaked mass over the whole
horizon is below tolerance) and :func:`solve_time_stepping_fsp` (the same
test applied interval by interval).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import List, Optional

import numpy as np

from .errors import BudgetError, CapacityError, ExpmvFailure, InvalidArgumentError
from .generator import BOUNDARY_MODES, assemble, update_generator
from .krylov import ExpmvOptions, expmv
from .statespace import (
    DEFAULT_M_MAX,
    QUANTILE_RULES,
    ProbabilityVector,
    PruneReport,
    StateSpace,
    expand,
    fixed_threshold_prune,
    prune_and_renormalize,
    prune_to_mass,
    quantile_select,
)

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "BudgetDecision",
    "StepRecord",
    "SolveResult",
    "AdaptiveFSP",
    "verify_budget",
    "solve_adaptive",
    "solve_standard_fsp",
    "solve_time_stepping_fsp",
    "local_error_bound",
    "STRATEGIES",
]

STRATEGIES = ("quantile", "prune_to_mass", "fixed_threshold", "none")

# smallest Krylov tolerance used when eps_time is configured as zero
_MIN_KRYLOV_TOL = 1e-12


@dataclass
class SolverConfig:
    t0: float = 0.0
    tf: float = 1.0
    dt: float = 0.1
    alpha: float = 1e-6
    eps_time: Optional[float] = None  # None -> 2 * alpha
    eps_global: float = 1e-3
    depth: int = 1
    prune_every: int = 1
    boundary: str = "closed"
    strategy: str = "quantile"
    theta: float = 0.0  # fixed_threshold cutoff
    tie_inclusive: bool = True
    # "at_most" keeps every prune within alpha, which the budget check assumes
    quantile_rule: str = "at_most"
    m_max: float = DEFAULT_M_MAX
    max_states: int = 200_000
    snapshot_every: int = 0
    seed: int = 0
    override_budget: bool = False
    krylov_dim: int = 30
    max_krylov_dim: int = 64
    # re-expand and redo a step while the boundary flux estimate exceeds
    # boundary_tol (None -> alpha, or 1e-10 when alpha is 0)
    adaptive_expand: bool = True
    boundary_tol: Optional[float] = None
    max_expand_rounds: int = 50

    def __post_init__(self):
        if self.eps_time is None:
            self.eps_time = 2.0 * self.alpha
        if not self.tf > self.t0:
            raise InvalidArgumentError(f"tf ({self.tf}) must exceed t0 ({self.t0})")
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if not (0 <= self.alpha < 1):
            raise InvalidArgumentError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not (0 <= self.eps_time < 1):
            raise InvalidArgumentError(f"eps_time must lie in [0, 1), got {self.eps_time}")
        if not self.eps_global > 0:
            raise InvalidArgumentError("eps_global must be positive")
        if self.depth < 1 or self.prune_every < 1 or self.max_states < 1:
            raise InvalidArgumentError("depth, prune_every and max_states must be positive")
        if self.boundary_tol is None:
            self.boundary_tol = self.alpha if self.alpha > 0 else 1e-10
        if not self.boundary_tol > 0 or self.max_expand_rounds < 1:
            raise InvalidArgumentError("boundary_tol and max_expand_rounds must be positive")
        if self.snapshot_every < 0:
            raise InvalidArgumentError("snapshot_every must be >= 0")
        if self.boundary not in BOUNDARY_MODES:
            raise InvalidArgumentError(f"boundary must be one of {BOUNDARY_MODES}")
        if self.quantile_rule not in QUANTILE_RULES:
            raise InvalidArgumentError(f"quantile_rule must be one of {QUANTILE_RULES}")
        if self.strategy not in STRATEGIES:
            raise InvalidArgumentError(f"strategy must be one of {STRATEGIES}")

    def n_steps(self) -> int:
        return _n_steps(self.t0, self.tf, self.dt)

    def expmv_options(self) -> ExpmvOptions:
        return ExpmvOptions(
            tol=max(self.eps_time, _MIN_KRYLOV_TOL),
            krylov_dim=self.krylov_dim,
            max_krylov_dim=self.max_krylov_dim,
        )


def _n_steps(t0, tf, dt) -> int:
    ratio = (tf - t0) / dt
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, abs(ratio)):
        return max(int(nearest), 1)
    return int(math.ceil(ratio))


@dataclass
class BudgetDecision:
    n_steps: int
    alpha: float
    eps_time: float
    eps_global: float
    bound: float
    slack: float
    passed: bool
    # eps_time <= 2 alpha keeps the time-stepping error from dominating
    balanced: bool


def verify_budget(config: SolverConfig) -> BudgetDecision:
    """Check N * (2 alpha + eps_time) <= eps_global.

    The arithmetic is done in decimal on the shortest repr of each input, so
    hand-computed values such as 100 * (2e-6 + 2e-6) = 4e-4 come out exact.
    """
    n = config.n_steps()
    a = Decimal(repr(float(config.alpha)))
    e = Decimal(repr(float(config.eps_time)))
    g = Decimal(repr(float(config.eps_global)))
    bound = n * (2 * a + e)
    decision = BudgetDecision(
        n_steps=n,
        alpha=config.alpha,
        eps_time=config.eps_time,
        eps_global=config.eps_global,
        bound=float(bound),
        slack=float(g - bound),
        passed=bound <= g,
        balanced=e <= 2 * a,
    )
    if not decision.balanced:
        log.warning("eps_time=%g exceeds 2*alpha=%g; time-stepping error dominates", config.eps_time, 2 * config.alpha)
    return decision


def local_error_bound(report: PruneReport) -> float:
    """l1 error introduced by applying ``report``: exactly 2 m."""
    return 2.0 * report.pruned_mass


@dataclass
class StepRecord:
    t: float
    n_states_before: int
    n_states_after: int
    pruned_mass: float
    local_bound: float
    expmv_error: float
    cum_bound: float
    n_added: int = 0
    leaked_mass: float = 0.0
    # first-order estimate of probability flux that hit the space boundary
    boundary_flux: float = 0.0
    prune_capped: bool = False


@dataclass
class Snapshot:
    t: float
    states: np.ndarray
    probs: np.ndarray


@dataclass
class SolveResult:
    space: StateSpace
    p: ProbabilityVector
    steps: List[StepRecord] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)
    wall_time: float = 0.0
    budget: Optional[BudgetDecision] = None
    budget_overridden: bool = False
    leaked_mass: float = 0.0
    t: float = 0.0

    @property
    def cum_bound(self) -> float:
        return self.steps[-1].cum_bound if self.steps else 0.0

    def marginal_mean(self, species: int) -> float:
        return float(self.p.weights @ self.space.states[:, species])


class AdaptiveFSP:
    """Step-by-step driver for the adaptive FSP loop.

    ``solve_adaptive`` is the usual entry point; the class is exposed so
    tests and experiments can intervene between steps.
    """

    def __init__(self, network, x0, config: SolverConfig):
        self.network = network
        self.config = config
        x0 = np.asarray(x0, dtype=np.int64).reshape(1, -1)
        if x0.shape[1] != network.n_species:
            raise InvalidArgumentError(
                f"x0 has {x0.shape[1]} entries, network has {network.n_species} species"
            )
        self.space = StateSpace(x0)
        self.p = ProbabilityVector.point_mass(self.space)
        self.A = assemble(self.space, network, config.boundary)
        self.t = float(config.t0)
        self.step_index = 0
        self.pending_removed = np.zeros((0, network.n_species), dtype=np.int64)
        self.records: List[StepRecord] = []
        self.snapshots: List[Snapshot] = []
        self._cum = 0.0
        self._opts = config.expmv_options()
        self._n_total = config.n_steps()
        if config.snapshot_every:
            self._snapshot()

    @property
    def done(self) -> bool:
        return self.step_index >= self._n_total

    def _snapshot(self):
        self.snapshots.append(Snapshot(self.t, self.space.states.copy(), self.p.weights.copy()))

    def select(self, space, p) -> PruneReport:
        cfg = self.config
        if cfg.strategy == "quantile":
            return quantile_select(space, p, cfg.alpha, cfg.tie_inclusive, cfg.m_max, cfg.quantile_rule)
        if cfg.strategy == "prune_to_mass":
            return prune_to_mass(space, p, cfg.alpha)
        if cfg.strategy == "fixed_threshold":
            return fixed_threshold_prune(space, p, cfg.theta)
        return PruneReport.empty(space, strategy="none")

    def evolve(self):
        """Expand, update the generator and integrate over one step.

        Leaves ``self.space``/``self.p`` at the end of the step, normalised
        but not yet pruned.  Returns bookkeeping for the step record.
        """
        cfg = self.config
        t_next = cfg.t0 + (self.step_index + 1) * cfg.dt
        h = min(t_next, cfg.tf) - self.t

        space, added = expand(self.space, self.network, cfg.depth, cfg.max_states)
        self.A = update_generator(self.A, space, self.pending_removed, added, self.network)
        self.pending_removed = np.zeros((0, self.network.n_species), dtype=np.int64)
        n_added = len(added)
        rounds = 1
        while True:
            p = self.p.padded(space)
            w, rep = expmv(self.A, p.weights, h, self._opts, clamp=True)
            w = np.maximum(w, 0.0)
            # trapezoid estimate; freshly added boundary states start at zero weight
            flux = float(0.5 * h * (self.A.exit_rates @ (p.weights + w)))
            if not cfg.adaptive_expand or flux <= cfg.boundary_tol or rounds >= cfg.max_expand_rounds:
                break
            bigger, more = expand(space, self.network, cfg.depth, cfg.max_states)
            if len(more) == 0:
                break
            self.A = update_generator(self.A, bigger, more[:0], more, self.network)
            space = bigger
            n_added += len(more)
            rounds += 1
        total = float(w.sum())
        leaked = 1.0 - total if cfg.boundary == "absorbing" else 0.0
        self.space = space
        self.p = ProbabilityVector(w / total, space.generation)
        self.t += h
        return n_added, rep.error, max(leaked, 0.0), flux

    def step(self) -> StepRecord:
        cfg = self.config
        n_added, err, leaked, flux = self.evolve()
        n_before = len(self.space)
        report = PruneReport.empty(self.space, strategy="none")
        if cfg.strategy != "none" and (self.step_index + 1) % cfg.prune_every == 0:
            report = self.select(self.space, self.p)
            if len(report.positions):
                self.space, self.p = prune_and_renormalize(self.space, self.p, report)
                self.pending_removed = report.removed
        m = report.pruned_mass
        self._cum += local_error_bound(report) + err + 2.0 * leaked
        rec = StepRecord(
            t=self.t,
            n_states_before=n_before,
            n_states_after=len(self.space),
            pruned_mass=m,
            local_bound=local_error_bound(report),
            expmv_error=err,
            cum_bound=self._cum,
            n_added=n_added,
            leaked_mass=leaked,
            boundary_flux=flux,
            prune_capped=report.capped,
        )
        self.records.append(rec)
        self.step_index += 1
        k = cfg.snapshot_every
        if k and (self.step_index % k == 0 or self.done):
            self._snapshot()
        return rec

    def result(self, wall_time=0.0, budget=None, overridden=False) -> SolveResult:
        return SolveResult(
            space=self.space,
            p=self.p,
            steps=list(self.records),
            snapshots=list(self.snapshots),
            wall_time=wall_time,
            budget=budget,
            budget_overridden=overridden,
            t=self.t,
        )


def solve_adaptive(network, x0, config: SolverConfig) -> SolveResult:
    """Run the adaptive FSP loop from a point mass at ``x0`` to ``config.tf``.

    Refuses to start when the budget check fails unless
    ``config.override_budget`` is set; the override is recorded in the
    result.  Capacity and Krylov failures are re-raised with the partial
    result attached as ``exc.partial``.
    """
    decision = verify_budget(config)
    if not decision.passed and not config.override_budget:
        raise BudgetError(decision)
    overridden = not decision.passed
    start = time.perf_counter()
    driver = AdaptiveFSP(network, x0, config)
    try:
        while not driver.done:
            driver.step()
    except (CapacityError, ExpmvFailure) as exc:
        exc.partial = driver.result(time.perf_counter() - start, decision, overridden)
        raise
    return driver.result(time.perf_counter() - start, decision, overridden)


def solve_standard_fsp(
    network,
    x0,
    tf: float,
    eps: float,
    depth: int = 1,
    max_states: int = 200_000,
    t0: float = 0.0,
    opts: ExpmvOptions | None = None,
) -> SolveResult:
    """Classical FSP: grow the space until the mass leaked by ``tf`` is <= eps.

    Uses the absorbing boundary so ``1 - sum(p)`` is the leak.  The first
    pass solves on ``{x0}``; each later pass expands by ``depth`` and
    re-solves from the initial condition.  One StepRecord per pass.
    """
    if not (0 <= eps <= 1):
        raise InvalidArgumentError(f"eps must lie in [0, 1], got {eps}")
    opts = opts or ExpmvOptions(tol=max(min(eps, 1e-8) * 1e-2, _MIN_KRYLOV_TOL))
    start = time.perf_counter()
    x0 = np.asarray(x0, dtype=np.int64).reshape(1, -1)
    space = StateSpace(x0)
    records = []
    while True:
        A = assemble(space, network, "absorbing")
        p0 = np.zeros(len(space))
        p0[space.index(x0[0])] = 1.0
        w, rep = expmv(A, p0, tf - t0, opts, clamp=True)
        w = np.maximum(w, 0.0)
        leak = max(1.0 - float(w.sum()), 0.0)
        records.append(StepRecord(tf, len(space), len(space), 0.0, 0.0, rep.error, leak, leaked_mass=leak))
        if leak <= eps:
            break
        new_space, added = expand(space, network, depth, max_states)
        if len(added) == 0:
            # closed reachable set; remaining leak is integration error only
            break
        space = new_space
    res = SolveResult(space, ProbabilityVector(w, space.generation), records, t=tf, leaked_mass=leak)
    res.wall_time = time.perf_counter() - start
    return res


def solve_time_stepping_fsp(network, x0, config: SolverConfig, eps: float) -> SolveResult:
    """Interval-by-interval FSP: each step of length dt must leak at most eps * dt / T.

    The distribution is carried forward unnormalised, so the final leak is
    the accumulated truncation error.
    """
    start = time.perf_counter()
    n = config.n_steps()
    per_step = eps / n
    opts = config.expmv_options()
    x0 = np.asarray(x0, dtype=np.int64).reshape(1, -1)
    space = StateSpace(x0)
    p = np.ones(1)
    t = config.t0
    records = []
    for k in range(n):
        h = min(config.t0 + (k + 1) * config.dt, config.tf) - t
        mass_in = float(p.sum())
        while True:
            A = assemble(space, network, "absorbing")
            w, rep = expmv(A, p, h, opts, clamp=True)
            w = np.maximum(w, 0.0)
            leak = max(mass_in - float(w.sum()), 0.0)
            if leak <= per_step:
                break
            new_space, added = expand(space, network, config.depth, config.max_states)
            if len(added) == 0:
                break
            p = np.concatenate([p, np.zeros(len(added))])
            space = new_space
        p = w
        t += h
        records.append(StepRecord(t, len(space), len(space), 0.0, 0.0, rep.error, 1.0 - float(p.sum()), leaked_mass=leak))
    res = SolveResult(space, ProbabilityVector(p, space.generation), records, t=t, leaked_mass=1.0 - float(p.sum()))
    res.wall_time = time.perf_counter() - start
    return res
