"""Benchmark models: Lotka-Volterra, Michaelis-Menten, toggle switch, birth-death."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .network import Constant, Hill, MassAction, Reaction, ReactionNetwork
from .solver import SolverConfig

__all__ = [
    "BenchmarkModel",
    "ToggleParams",
    "lotka_volterra",
    "michaelis_menten",
    "toggle_switch",
    "birth_death",
    "BUILTINS",
    "Mode",
    "joint_grid",
    "find_modes",
    "separated_modes",
]

@dataclass
class BenchmarkModel:
    name: str
    network: ReactionNetwork
    x0: tuple
    config: SolverConfig
    description: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = tuple(int(v) for v in self.x0)
        if len(self.x0) != self.network.n_species:
            raise ValueError(f"x0 {self.x0} does not match {self.network.n_species} species")

def lotka_volterra(a=0.1, b=0.005, c=0.6, x0=(50, 100)) -> BenchmarkModel:
    """Prey X1 reproduce, predators X2 eat prey and die."""
    net = ReactionNetwork(
        ["X1", "X2"],
        [
            Reaction({0: 1}, {0: 2}, MassAction(a), "prey birth"),
            Reaction({0: 1, 1: 1}, {1: 2}, MassAction(b), "predation"),
            Reaction({1: 1}, {}, MassAction(c), "predator death"),
        ],
    )
    cfg = SolverConfig(tf=10.0, dt=0.1, alpha=1e-6, eps_time=2e-6, eps_global=1e-3, depth=3)
    return BenchmarkModel("lotka_volterra", net, x0, cfg, "predator-prey", dict(a=a, b=b, c=c))

def michaelis_menten(k1=0.01, km1=0.1, k2=0.1, x0=(50, 10, 1, 1)) -> BenchmarkModel:
    """E + S <-> ES -> E + P over the state (E, S, ES, P)."""
    net = ReactionNetwork(
        ["E", "S", "ES", "P"],
        [
            Reaction({0: 1, 1: 1}, {2: 1}, MassAction(k1), "binding"),
            Reaction({2: 1}, {0: 1, 1: 1}, MassAction(km1), "unbinding"),
            Reaction({2: 1}, {0: 1, 3: 1}, MassAction(k2), "catalysis"),
        ],
    )
    cfg = SolverConfig(tf=50.0, dt=0.5, alpha=1e-7, eps_time=2e-7, eps_global=1e-4, depth=2)
    return BenchmarkModel("michaelis_menten", net, x0, cfg, "enzyme kinetics", dict(k1=k1, km1=km1, k2=k2))

@dataclass
class ToggleParams:
    """Mutual-repression toggle parameters (Hill exponent fixed at 3).

    U is produced at eta*(alpha1 + beta1*K1^3/(K1^3 + V^3)) and degraded at
    (d1 + s*gamma/(1 + s)), times U unless ``constant_degradation``; V is
    the mirror image with alpha2, beta2, K2 and d2.
    """

    eta: float = 1.0
    alpha1: float = 0.5
    beta1: float = 20.0
    K1: float = 6.0
    alpha2: float = 0.5
    beta2: float = 20.0
    K2: float = 6.0
    d1: float = 1.0
    gamma: float = 0.0
    s: float = 0.0
    d2: float = 1.0
    constant_degradation: bool = False

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k == "constant_degradation":
                continue
            if k in ("gamma", "s"):
                if v < 0:
                    raise ValueError(f"toggle parameter {k} must be >= 0")
            elif not v > 0:
                raise ValueError(f"toggle parameter {k} must be > 0")

def toggle_switch(params: ToggleParams | None = None, x0=(85, 5), tf: float = 100.0) -> BenchmarkModel:
    """Two mutually repressing genes.

    The default parameters are not a published set; they were chosen so that
    from (85, 5) roughly a fifth of the mass switches to the V-high state by
    t = 100 while the two basins stay separated by a deep saddle.
    """
    p = params or ToggleParams()
    deg_u = p.d1 + p.s * p.gamma / (1.0 + p.s)
    if p.constant_degradation:
        law_u, law_v = Constant(deg_u), Constant(p.d2)
    else:
        law_u, law_v = MassAction(deg_u), MassAction(p.d2)
    net = ReactionNetwork(
        ["U", "V"],
        [
            Reaction({}, {0: 1}, Hill(p.alpha1, p.beta1, p.K1, 3, 1, "repressing", p.eta), "U production"),
            Reaction({0: 1}, {}, law_u, "U degradation"),
            Reaction({}, {1: 1}, Hill(p.alpha2, p.beta2, p.K2, 3, 0, "repressing", p.eta), "V production"),
            Reaction({1: 1}, {}, law_v, "V degradation"),
        ],
    )
    cfg = SolverConfig(tf=tf, dt=1.0, alpha=1e-6, eps_time=2e-6, eps_global=1e-3, depth=2)
    return BenchmarkModel("toggle_switch", net, x0, cfg, "genetic toggle switch", asdict(p))

def birth_death(lam=1.0, mu=1.0, cap=None, x0=5) -> BenchmarkModel:
    """0 -> X at rate lam, X -> 0 at rate mu*X; births stop at ``cap`` if given."""
    caps = {} if cap is None else {0: int(cap)}
    net = ReactionNetwork(
        ["X"],
        [
            Reaction({}, {0: 1}, MassAction(lam), "birth", caps=caps),
            Reaction({0: 1}, {}, MassAction(mu), "death"),
        ],
    )
    cfg = SolverConfig(tf=1.0, dt=0.05, alpha=1e-8, eps_time=2e-8, eps_global=1e-5, depth=10)
    return BenchmarkModel("birth_death", net, (x0,), cfg, "immigration-death", dict(lam=lam, mu=mu, cap=cap))

BUILTINS = {
    "lotka_volterra": lotka_volterra,
    "michaelis_menten": michaelis_menten,
    "toggle_switch": toggle_switch,
    "birth_death": birth_death,
}


# --- two-species landscape analysis ---------------------------------------


@dataclass
class Mode:
    location: tuple
    height: float
    # level at which this peak's basin merges into a higher peak's (0 for the top)
    saddle: float

    @property
    def depth_ratio(self) -> float:
        return self.height / self.saddle if self.saddle > 0 else float("inf")


def joint_grid(states, weights, axes=(0, 1)) -> np.ndarray:
    """Dense 2-D array of probability indexed by the counts of two species."""
    states = np.asarray(states)
    i, j = axes
    shape = (int(states[:, i].max()) + 1, int(states[:, j].max()) + 1)
    grid = np.zeros(shape)
    np.add.at(grid, (states[:, i], states[:, j]), np.asarray(weights, dtype=float))
    return grid


def find_modes(grid: np.ndarray) -> list:
    """Peaks of a 2-D landscape with the saddle level that separates each one.

    Cells are flooded from the top down with 8-connectivity.  When two
    basins meet, the one with the lower peak gets the current level as its
    saddle.  Returned modes are sorted by height, tallest first.
    """
    grid = np.asarray(grid, dtype=float)
    rows, cols = grid.shape
    flat = grid.ravel()
    order = np.argsort(-flat, kind="stable")
    parent = np.full(flat.size, -1, dtype=np.int64)
    peak = {}

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    saddles = {}
    for c in order:
        if flat[c] <= 0:
            break
        parent[c] = c
        peak[c] = c
        r, q = divmod(int(c), cols)
        for dr in (-1, 0, 1):
            for dq in (-1, 0, 1):
                rr, qq = r + dr, q + dq
                if (dr or dq) and 0 <= rr < rows and 0 <= qq < cols:
                    n = rr * cols + qq
                    if parent[n] < 0:
                        continue
                    a, b = find(c), find(n)
                    if a == b:
                        continue
                    pa, pb = peak[a], peak[b]
                    hi, lo = (pa, pb) if flat[pa] >= flat[pb] else (pb, pa)
                    if lo != c:
                        saddles[lo] = flat[c]
                    parent[b] = a
                    peak[a] = hi
    tops = [p for p in {peak[find(c)] for c in np.flatnonzero(parent >= 0)}]
    out = [Mode(divmod(int(p), cols), float(flat[p]), 0.0) for p in tops]
    out += [Mode(divmod(int(p), cols), float(flat[p]), float(s)) for p, s in saddles.items()]
    out.sort(key=lambda m: -m.height)
    return out


def separated_modes(grid: np.ndarray, ratio: float = 10.0) -> list:
    """Modes whose separating saddle is at least ``ratio`` times lower than the peak."""
    return [m for m in find_modes(grid) if m.height >= ratio * m.saddle]
