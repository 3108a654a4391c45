"""Reaction networks, propensity laws and stoichiometry.

A network is a list of species plus a list of reactions.  Each reaction
carries reactant/product coefficient maps and a propensity law.  Networks
are immutable once built; the vectorised :meth:`ReactionNetwork.propensities`
is what the solver and the SSA use on the hot path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import InvalidNetworkError

__all__ = [
    "Species",
    "MassAction",
    "Hill",
    "Constant",
    "Reaction",
    "ReactionNetwork",
    "change_vector",
    "propensity",
]


@dataclass(frozen=True)
class Species:
    name: str
    index: int


@dataclass(frozen=True)
class MassAction:
    """rate * prod_i C(x_i, a_i), with a_i the reactant coefficients."""

    rate: float

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise InvalidNetworkError(f"mass-action rate must be finite and >= 0, got {self.rate}")


@dataclass(frozen=True)
class Hill:
    """scale * (base + amplitude * H(x_regulator)).

    H is K^n / (K^n + x^n) when repressing and x^n / (K^n + x^n) when
    activating.
    """

    base: float
    amplitude: float
    threshold: float
    exponent: int
    regulator: int
    direction: str = "repressing"
    scale: float = 1.0

    def __post_init__(self):
        for name in ("base", "amplitude", "scale"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidNetworkError(f"Hill {name} must be finite and >= 0, got {v}")
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise InvalidNetworkError(f"Hill threshold must be > 0, got {self.threshold}")
        if int(self.exponent) != self.exponent or self.exponent < 1:
            raise InvalidNetworkError(f"Hill exponent must be a positive integer, got {self.exponent}")
        if self.direction not in ("repressing", "activating"):
            raise InvalidNetworkError(f"unknown Hill direction {self.direction!r}")
        if int(self.regulator) != self.regulator or self.regulator < 0:
            raise InvalidNetworkError(f"bad Hill regulator index {self.regulator}")

    def _term(self, x):
        x = np.asarray(x, dtype=float)
        # (x/K)^n form avoids overflow of K^n + x^n for large counts
        r = (x / self.threshold) ** self.exponent
        if self.direction == "repressing":
            h = 1.0 / (1.0 + r)
        else:
            h = r / (1.0 + r)
        return self.scale * (self.base + self.amplitude * h)


@dataclass(frozen=True)
class Constant:
    rate: float

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise InvalidNetworkError(f"constant rate must be finite and >= 0, got {self.rate}")


PropensityExpr = Union[MassAction, Hill, Constant]


def _clean_coeffs(coeffs, what):
    out = {}
    for k, v in dict(coeffs).items():
        if int(k) != k or k < 0:
            raise InvalidNetworkError(f"{what}: species index {k!r} is not a nonnegative integer")
        if int(v) != v or v < 0:
            raise InvalidNetworkError(f"{what}: coefficient {v!r} is not a nonnegative integer")
        if v:
            out[int(k)] = int(v)
    return out


@dataclass(frozen=True)
class Reaction:
    reactants: Mapping[int, int]
    products: Mapping[int, int]
    propensity: PropensityExpr
    name: str = ""
    # optional upper bounds: the reaction is disabled where firing would push
    # species i above caps[i]
    caps: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "reactants", _clean_coeffs(self.reactants, "reactants"))
        object.__setattr__(self, "products", _clean_coeffs(self.products, "products"))
        object.__setattr__(self, "caps", _clean_coeffs(self.caps, "caps") if self.caps else {})
        if self.reactants == self.products:
            raise InvalidNetworkError(
                f"reaction {self.name or '?'} has zero net change (reactants == products)"
            )
        if not isinstance(self.propensity, (MassAction, Hill, Constant)):
            raise InvalidNetworkError(f"unsupported propensity {self.propensity!r}")

    def max_index(self):
        idx = list(self.reactants) + list(self.products) + list(self.caps)
        if isinstance(self.propensity, Hill):
            idx.append(self.propensity.regulator)
        return max(idx, default=-1)


def change_vector(reaction: Reaction, n_species: int) -> np.ndarray:
    """Net stoichiometric change (products - reactants) as an int vector."""
    if reaction.max_index() >= n_species:
        raise InvalidNetworkError(
            f"reaction {reaction.name or '?'} references species index "
            f"{reaction.max_index()} but the network has {n_species} species"
        )
    nu = np.zeros(n_species, dtype=np.int64)
    for i, a in reaction.reactants.items():
        nu[i] -= a
    for i, b in reaction.products.items():
        nu[i] += b
    return nu


def _falling_binom(x, a):
    """C(x, a) elementwise for integer arrays; zero when x < a."""
    out = np.ones(np.shape(x), dtype=float)
    for j in range(a):
        out *= np.maximum(x - j, 0)
    if a >= 2:
        out /= math.factorial(a)
    return out


def _evaluate(reaction: Reaction, states: np.ndarray) -> np.ndarray:
    states = np.asarray(states)
    n = states.shape[0]
    gate = np.ones(n, dtype=bool)
    for i, a in reaction.reactants.items():
        gate &= states[:, i] >= a
    for i, cap in reaction.caps.items():
        nu_i = reaction.products.get(i, 0) - reaction.reactants.get(i, 0)
        gate &= states[:, i] + nu_i <= cap
    law = reaction.propensity
    if isinstance(law, MassAction):
        val = np.full(n, float(law.rate))
        for i, a in reaction.reactants.items():
            val *= _falling_binom(states[:, i], a)
    elif isinstance(law, Hill):
        val = law._term(states[:, law.regulator])
    else:
        val = np.full(n, float(law.rate))
    return np.where(gate, val, 0.0)


def propensity(reaction: Reaction, state) -> float:
    """Propensity of a single reaction at a single state."""
    s = np.asarray(state, dtype=np.int64).reshape(1, -1)
    return float(_evaluate(reaction, s)[0])


class ReactionNetwork:
    """Species plus reactions; treated as immutable after construction."""

    def __init__(self, species: Sequence, reactions: Sequence[Reaction]):
        sp = []
        for i, s in enumerate(species):
            if isinstance(s, Species):
                if s.index != i:
                    raise InvalidNetworkError(f"species {s.name!r} has index {s.index}, expected {i}")
                sp.append(s)
            else:
                sp.append(Species(str(s), i))
        names = [s.name for s in sp]
        if len(set(names)) != len(names):
            raise InvalidNetworkError(f"duplicate species names in {names}")
        if not sp:
            raise InvalidNetworkError("network needs at least one species")
        reactions = tuple(reactions)
        if not reactions:
            raise InvalidNetworkError("network needs at least one reaction")
        stoich = np.stack([change_vector(r, len(sp)) for r in reactions])
        stoich.setflags(write=False)
        self.species = tuple(sp)
        self.reactions = reactions
        # row k is the change vector of reaction k
        self.stoich = stoich

    def __repr__(self):
        return f"ReactionNetwork(species={self.species_names}, n_reactions={self.n_reactions})"

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @property
    def species_names(self):
        return [s.name for s in self.species]

    def species_index(self, name: str) -> int:
        for s in self.species:
            if s.name == name:
                return s.index
        raise InvalidNetworkError(f"unknown species {name!r}")

    def propensities(self, states) -> np.ndarray:
        """Propensity matrix of shape (n_states, n_reactions)."""
        states = np.asarray(states, dtype=np.int64)
        if states.ndim == 1:
            states = states.reshape(1, -1)
        if states.shape[1] != self.n_species:
            raise InvalidNetworkError(
                f"state has {states.shape[1]} entries, network has {self.n_species} species"
            )
        out = np.empty((states.shape[0], self.n_reactions))
        for k, r in enumerate(self.reactions):
            out[:, k] = _evaluate(r, states)
        return out

    def __eq__(self, other):
        if not isinstance(other, ReactionNetwork):
            return NotImplemented
        return self.species == other.species and self.reactions == other.reactions

    __hash__ = object.__hash__
