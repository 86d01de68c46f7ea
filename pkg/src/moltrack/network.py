"""Reaction networks, tracking status schemas and the augmented network.

A network stores the volume-independent rate constant of every reaction.
Under mass-action kinetics the stochastic constant at volume ``V`` is
``kappa * V**(1 - |y|)``, so bimolecular reactions fire at ``kappa/V`` and
``lambda^V(floor(V z)) / V`` tends to ``kappa * z**y``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "DELTA",
    "Complex",
    "Reaction",
    "CustomKinetics",
    "ReactionNetwork",
    "StatusSchema",
    "TrackedReaction",
    "AugmentedNetwork",
    "SchemaError",
    "falling_factorial",
    "validate_network",
    "stochastic_intensity",
    "deterministic_rate",
    "deterministic_rates",
    "theta",
    "build_augmented",
    "complex_from_names",
]

#: Index of the cemetery status. Never a member of ``StatusSchema.statuses``.
DELTA = -1

PROB_TOL = 1e-9


class SchemaError(ValueError):
    """A status schema is inconsistent with its network."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Complex:
    """Sparse non-negative integer combination of species.

    ``terms`` holds ``(species_index, coefficient)`` pairs sorted by index,
    with every coefficient >= 1.
    """

    terms: tuple = ()

    def __post_init__(self):
        terms = tuple(sorted((int(s), int(c)) for s, c in self.terms if int(c) != 0))
        for s, c in terms:
            if c < 0:
                raise ValueError(f"negative coefficient {c} for species {s}")
        if len({s for s, _ in terms}) != len(terms):
            raise ValueError("repeated species in complex")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_mapping(cls, coeffs: Mapping[int, int]) -> "Complex":
        return cls(tuple(coeffs.items()))

    def __getitem__(self, species: int) -> int:
        for s, c in self.terms:
            if s == species:
                return c
        return 0

    @property
    def support(self) -> frozenset:
        return frozenset(s for s, _ in self.terms)

    @property
    def order(self) -> int:
        """The 1-norm ``|y|_1``."""
        return sum(c for _, c in self.terms)

    def vector(self, dim: int) -> np.ndarray:
        v = np.zeros(dim, dtype=np.int64)
        for s, c in self.terms:
            v[s] = c
        return v


@dataclass(frozen=True)
class Reaction:
    reactant: Complex
    product: Complex
    rate_constant: float
    label: str = ""


@dataclass(frozen=True)
class CustomKinetics:
    """Non-mass-action kinetics given as per-reaction rate tables.

    ``stochastic(r, x, volume)`` must return ``lambda^V_r(x)`` and vanish unless
    ``x >= y_r``; ``deterministic(r, z)`` returns the fluid-limit rate.
    """

    stochastic: Callable[[int, np.ndarray, float], float]
    deterministic: Callable[[int, np.ndarray], float]


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    species: tuple
    reactions: tuple
    kinetics: CustomKinetics | None = None

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        d, n = len(self.species), len(self.reactions)
        reactant = np.zeros((n, d), dtype=np.int64)
        product = np.zeros((n, d), dtype=np.int64)
        for r, rxn in enumerate(self.reactions):
            for s, c in rxn.reactant.terms:
                if s >= d:
                    raise ValueError(f"reaction {r} references unknown species index {s}")
                reactant[r, s] = c
            for s, c in rxn.product.terms:
                if s >= d:
                    raise ValueError(f"reaction {r} references unknown species index {s}")
                product[r, s] = c
        reactant.setflags(write=False)
        product.setflags(write=False)
        change = product - reactant
        change.setflags(write=False)
        kappa = np.array([rxn.rate_constant for rxn in self.reactions], dtype=float)
        kappa.setflags(write=False)
        object.__setattr__(self, "reactant_matrix", reactant)
        object.__setattr__(self, "product_matrix", product)
        object.__setattr__(self, "change_matrix", change)
        object.__setattr__(self, "rate_constants", kappa)

    def __eq__(self, other):
        if not isinstance(other, ReactionNetwork):
            return NotImplemented
        return (self.species, self.reactions, self.kinetics) == (
            other.species,
            other.reactions,
            other.kinetics,
        )

    def __hash__(self):
        return hash((self.species, self.reactions))

    @property
    def dim(self) -> int:
        return len(self.species)

    @property
    def is_mass_action(self) -> bool:
        return self.kinetics is None

    def species_index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    def reaction_index(self, label: str) -> int:
        for r, rxn in enumerate(self.reactions):
            if rxn.label == label:
                return r
        raise KeyError(f"unknown reaction {label!r}")

    def volume_rate_constants(self, volume: float) -> np.ndarray:
        """Stochastic rate constants ``kappa * V**(1 - |y|)``."""
        order = self.reactant_matrix.sum(axis=1)
        return self.rate_constants * float(volume) ** (1.0 - order)

    def with_kinetics(self, kinetics: CustomKinetics | None) -> "ReactionNetwork":
        return ReactionNetwork(self.species, self.reactions, kinetics)


def falling_factorial(x, c: int):
    """``x (x-1) ... (x-c+1)``; ``1`` when ``c == 0``."""
    out = 1
    for j in range(int(c)):
        out = out * (x - j)
    return out


def validate_network(net: ReactionNetwork) -> list[str]:
    """Return every structural violation; an empty list means the network is fine."""
    problems = []
    seen = set()
    for name in net.species:
        if name in seen:
            problems.append(f"duplicate species {name!r}")
        seen.add(name)
    used = np.zeros(net.dim, dtype=bool)
    for r, rxn in enumerate(net.reactions):
        tag = rxn.label or f"#{r}"
        if not rxn.rate_constant > 0:
            problems.append(f"reaction {tag}: non-positive rate constant {rxn.rate_constant}")
        if rxn.reactant == rxn.product:
            problems.append(f"reaction {tag}: self-loop")
        for s in rxn.reactant.support | rxn.product.support:
            used[s] = True
    for s in np.flatnonzero(~used):
        problems.append(f"unused species {net.species[s]!r}")
    return problems


def stochastic_intensity(net: ReactionNetwork, r: int, x, volume: float = 1.0) -> float:
    x = np.asarray(x)
    if net.kinetics is not None:
        return float(net.kinetics.stochastic(r, x, volume))
    y = net.reactions[r].reactant
    out = net.rate_constants[r] * float(volume) ** (1 - y.order)
    for s, c in y.terms:
        if x[s] < c:
            return 0.0
        out *= falling_factorial(int(x[s]), c)
    return float(out)


def deterministic_rate(net: ReactionNetwork, r: int, z) -> float:
    z = np.asarray(z, dtype=float)
    if net.kinetics is not None:
        return float(net.kinetics.deterministic(r, z))
    out = net.rate_constants[r]
    for s, c in net.reactions[r].reactant.terms:
        out *= z[s] ** c
    return float(out)


def deterministic_rates(net: ReactionNetwork, z) -> np.ndarray:
    """All fluid rates at ``z`` (0**0 == 1)."""
    z = np.asarray(z, dtype=float)
    if net.kinetics is not None:
        return np.array([net.kinetics.deterministic(r, z) for r in range(len(net.reactions))])
    return net.rate_constants * np.prod(z[None, :] ** net.reactant_matrix, axis=1)


@dataclass(frozen=True)
class StatusSchema:
    """Statuses of a tracked molecule and their transformation probabilities.

    ``probs`` maps ``(reaction, from_status, to_status)`` to a probability;
    ``to_status`` may be :data:`DELTA`. Missing keys are zero. ``initial``
    optionally names, per species index, the status that fresh molecules of
    that species start in when building aggregate ensembles.
    """

    statuses: tuple
    sigma: tuple
    probs: Mapping = field(default_factory=dict)
    initial: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "statuses", tuple(self.statuses))
        object.__setattr__(self, "sigma", tuple(int(s) for s in self.sigma))
        probs = {}
        for (r, a, b), p in self.probs.items():
            if p != 0:
                probs[(int(r), int(a), int(b))] = p
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "initial", {int(k): int(v) for k, v in self.initial.items()})
        if len(self.statuses) != len(self.sigma):
            raise ValueError("statuses and sigma differ in length")

    def __hash__(self):
        return hash((self.statuses, self.sigma, tuple(sorted(self.probs.items()))))

    @property
    def n_statuses(self) -> int:
        return len(self.statuses)

    def status_index(self, name: str) -> int:
        if name in ("DELTA", "Δ"):
            return DELTA
        try:
            return self.statuses.index(name)
        except ValueError:
            raise KeyError(f"unknown status {name!r}") from None

    def status_name(self, tau: int) -> str:
        return "DELTA" if tau == DELTA else self.statuses[tau]

    def species_of(self, tau: int) -> int | None:
        return None if tau == DELTA else self.sigma[tau]

    def prob(self, r: int, tau: int, tau2: int):
        return self.probs.get((r, tau, tau2), 0)

    def alpha(self, dim: int) -> np.ndarray:
        """``alpha(S)``: how many statuses map to each species."""
        return np.bincount(np.asarray(self.sigma, dtype=np.int64), minlength=dim)

    def tracked_species(self) -> list[int]:
        return sorted(set(self.sigma))

    def initial_status(self, species: int) -> int:
        if species in self.initial:
            return self.initial[species]
        for tau, s in enumerate(self.sigma):
            if s == species:
                return tau
        raise KeyError(f"species {species} has no status")

    def check(self, net: ReactionNetwork) -> list[str]:
        """Violations of the tracking-system requirements against ``net``."""
        problems = []
        d = net.dim
        for tau, s in enumerate(self.sigma):
            if not 0 <= s < d:
                problems.append(f"status {self.statuses[tau]!r} maps to unknown species index {s}")
        if len(set(self.statuses)) != len(self.statuses):
            problems.append("duplicate status names")
        for k, v in self.initial.items():
            if not 0 <= v < len(self.statuses) or self.sigma[v] != k:
                problems.append(f"initial status for species index {k} does not map to it")
        if problems:
            return problems
        n_rxn = len(net.reactions)
        for (r, a, b), p in self.probs.items():
            if not 0 <= r < n_rxn:
                problems.append(f"probability for unknown reaction index {r}")
                continue
            if not 0 <= a < len(self.statuses) or not (b == DELTA or 0 <= b < len(self.statuses)):
                problems.append(f"probability with unknown status in reaction {r}")
                continue
            if not 0 <= p <= 1:
                problems.append(f"probability {p} outside [0, 1]")
            rxn = net.reactions[r]
            tag = rxn.label or f"#{r}"
            if self.sigma[a] not in rxn.reactant.support:
                problems.append(
                    f"reaction {tag}: {self.statuses[a]!r} cannot take part (species not a reactant)"
                )
            if b != DELTA and self.sigma[b] not in rxn.product.support:
                problems.append(
                    f"reaction {tag}: {self.statuses[b]!r} is not a product status"
                )
        for r, rxn in enumerate(net.reactions):
            tag = rxn.label or f"#{r}"
            for a, s in enumerate(self.sigma):
                if s not in rxn.reactant.support:
                    continue
                total = sum(
                    p for (rr, aa, _), p in self.probs.items() if rr == r and aa == a
                )
                if abs(total - 1) > PROB_TOL:
                    problems.append(
                        f"reaction {tag}: row for {self.statuses[a]!r} sums to {total}, not 1"
                    )
        return problems


def theta(schema: StatusSchema, y: Complex, tau: int, x) -> float:
    """Chance that one given molecule of ``sigma(tau)`` is among the ``y`` drawn."""
    if tau == DELTA:
        return 0.0
    s = schema.sigma[tau]
    ys, xs = y[s], int(x[s])
    if ys >= 1 and xs >= ys:
        return ys / xs
    return 0.0


@dataclass(frozen=True)
class TrackedReaction:
    """``source + y -> target + y'`` realised on top of base reaction ``reaction``."""

    source: int
    target: int
    reaction: int
    probability: Real


@dataclass(frozen=True, eq=False)
class AugmentedNetwork:
    base: ReactionNetwork
    schema: StatusSchema
    tracked: tuple

    def intensity(self, k: int, status: int, x, volume: float = 1.0) -> float:
        """Rate of tracked reaction ``k`` with the molecule in ``status``."""
        tr = self.tracked[k]
        if status != tr.source:
            return 0.0
        y = self.base.reactions[tr.reaction].reactant
        lam = stochastic_intensity(self.base, tr.reaction, x, volume)
        return theta(self.schema, y, status, x) * float(tr.probability) * lam

    def untracked_intensity(self, r: int, status: int, x, volume: float = 1.0) -> float:
        """Rate at which reaction ``r`` fires without the tracked molecule."""
        y = self.base.reactions[r].reactant
        lam = stochastic_intensity(self.base, r, x, volume)
        return (1.0 - theta(self.schema, y, status, x)) * lam

    def destinations(self, r: int, status: int) -> list[tuple[int, Real]]:
        return [
            (tr.target, tr.probability)
            for tr in self.tracked
            if tr.reaction == r and tr.source == status
        ]

    def label(self, k: int) -> str:
        tr = self.tracked[k]
        rxn = self.base.reactions[tr.reaction]
        return (
            f"{self.schema.status_name(tr.source)}+{rxn.label or tr.reaction}"
            f"->{self.schema.status_name(tr.target)}"
        )


def build_augmented(net: ReactionNetwork, schema: StatusSchema) -> AugmentedNetwork:
    problems = schema.check(net)
    if problems:
        raise SchemaError(problems)
    tracked = tuple(
        TrackedReaction(a, b, r, p)
        for (r, a, b), p in sorted(schema.probs.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] == DELTA, kv[0][2]))
        if p > 0
    )
    return AugmentedNetwork(net, schema, tracked)


def complex_from_names(net_species: Sequence[str], coeffs: Mapping[str, int]) -> Complex:
    return Complex(tuple((net_species.index(k), v) for k, v in coeffs.items()))
