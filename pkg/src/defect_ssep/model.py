"""Lattices, occupancy configurations and defect rate schedules.

The state space is the set of 0/1 occupancy vectors over a finite lattice,
either a discrete torus of ``n`` sites or a symmetric chunk of the integer
line with reflecting ends.  The defect lives at site 0 (a slow site whose
exit rate is ``g(n)``) or on the ``k`` bonds ``{0,1},...,{k-1,k}`` (slow
bonds).  All user-facing dynamics run on top of these types.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AdjacencyError, DomainError

TORUS = "torus"
LINE = "line"


@dataclass(frozen=True)
class Lattice:
    """Finite lattice: a torus of `size` sites, or the line {-size//2..size//2}.

    On the line the index range follows the convention that site 0 sits in
    the middle; the two ends are reflecting (jumps off the end are
    suppressed), which is the finite truncation used for infinite-volume
    runs.
    """

    size: int
    geometry: str = TORUS

    def __post_init__(self):
        if self.geometry not in (TORUS, LINE):
            raise DomainError(f"unknown geometry {self.geometry!r}")
        if self.size < 3:
            raise DomainError("lattice needs at least 3 sites")

    @property
    def radius(self) -> int:
        """Largest site label on the line; unused on the torus."""
        return self.size // 2

    @property
    def n_sites(self) -> int:
        return self.size if self.geometry == TORUS else 2 * self.radius + 1

    @property
    def origin_index(self) -> int:
        """Storage index of site 0."""
        return 0 if self.geometry == TORUS else self.radius

    @property
    def n_bonds(self) -> int:
        return self.size if self.geometry == TORUS else self.n_sites - 1

    def sites(self) -> np.ndarray:
        """Site labels in storage order."""
        if self.geometry == TORUS:
            return np.arange(self.size)
        return np.arange(-self.radius, self.radius + 1)

    def index(self, x: int) -> int:
        """Storage index of site label x."""
        if self.geometry == TORUS:
            return int(x) % self.size
        i = int(x) + self.radius
        if not 0 <= i < self.n_sites:
            raise DomainError(f"site {x} outside line lattice")
        return i

    def contains(self, x: int) -> bool:
        if self.geometry == TORUS:
            return True
        return -self.radius <= x <= self.radius

    def are_adjacent(self, x: int, y: int) -> bool:
        if self.geometry == TORUS:
            return (x - y) % self.size in (1, self.size - 1)
        return self.contains(x) and self.contains(y) and abs(x - y) == 1

    def bond_label(self, x: int, y: int) -> int:
        """Label of the bond {x,y}: the site whose right neighbor is the other."""
        if not self.are_adjacent(x, y):
            raise AdjacencyError(f"sites {x} and {y} are not adjacent")
        if self.geometry == TORUS:
            return x % self.size if (y - x) % self.size == 1 else y % self.size
        return min(x, y)


@dataclass(frozen=True)
class Configuration:
    """Immutable hard-exclusion occupancy vector over a lattice."""

    lattice: Lattice
    occupancy: np.ndarray
    n_particles: int = field(default=-1)

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if occ.shape != (self.lattice.n_sites,):
            raise DomainError(
                f"occupancy length {occ.shape} does not match lattice "
                f"({self.lattice.n_sites} sites)"
            )
        if np.any(occ > 1):
            raise DomainError("occupancy entries must be 0 or 1")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "n_particles", int(occ.sum()))

    def __getitem__(self, x: int) -> int:
        """Occupancy at site label x."""
        return int(self.occupancy[self.lattice.index(x)])

    def with_occupancy(self, occ: np.ndarray) -> "Configuration":
        return Configuration(self.lattice, occ)

    @classmethod
    def empty(cls, lattice: Lattice) -> "Configuration":
        return cls(lattice, np.zeros(lattice.n_sites, dtype=np.uint8))

    @classmethod
    def full(cls, lattice: Lattice) -> "Configuration":
        return cls(lattice, np.ones(lattice.n_sites, dtype=np.uint8))

    @classmethod
    def from_sites(cls, lattice: Lattice, occupied) -> "Configuration":
        occ = np.zeros(lattice.n_sites, dtype=np.uint8)
        for x in occupied:
            occ[lattice.index(x)] = 1
        return cls(lattice, occ)


def swap(config: Configuration, x: int, y: int) -> Configuration:
    """Exchange the occupancies of adjacent sites x and y.

    Particle count is conserved; swapping equal entries returns an equal
    configuration.  Non-adjacent pairs raise AdjacencyError.
    """
    lat = config.lattice
    if not lat.are_adjacent(x, y):
        raise AdjacencyError(f"sites {x} and {y} are not adjacent")
    occ = np.array(config.occupancy, dtype=np.uint8)
    i, j = lat.index(x), lat.index(y)
    occ[i], occ[j] = occ[j], occ[i]
    return Configuration(lat, occ)


SLOW_SITE = "slow-site"
SLOW_BONDS = "k-slow-bonds"
UNIFORM = "uniform"

POWER_LAW = "power"
PERTURBED_UNIT = "perturbed"


@dataclass(frozen=True)
class RateSchedule:
    """Defect specification: where the non-unit rates sit and their size g(n).

    kind 'slow-site' attaches rate g(n) to every jump leaving site 0 and
    rate 1 everywhere else; 'k-slow-bonds' attaches rate alpha*n**-beta to
    both directions of the k bonds {0,1},...,{k-1,k}; 'uniform' has all
    rates equal to one.

    g(n) comes in two forms: a power law alpha*n**-beta, or a perturbed
    unit 1 + o1(n) where o1 defaults to c/sqrt(n) with a configurable
    signed coefficient c.
    """

    kind: str = SLOW_SITE
    form: str = POWER_LAW
    alpha: float = 1.0
    beta: float = 0.0
    c: float = 1.0
    k: int = 1
    o1: Callable[[int], float] | None = None

    def __post_init__(self):
        if self.kind not in (SLOW_SITE, SLOW_BONDS, UNIFORM):
            raise DomainError(f"unknown schedule kind {self.kind!r}")
        if self.form not in (POWER_LAW, PERTURBED_UNIT):
            raise DomainError(f"unknown rate form {self.form!r}")
        if self.kind == SLOW_BONDS:
            if self.form != POWER_LAW:
                raise DomainError("slow bonds carry power-law rates only")
            if self.k < 1:
                raise DomainError("bond count k must be a positive integer")
        if self.form == POWER_LAW:
            if self.alpha <= 0:
                raise DomainError("alpha must be positive")
            if self.beta < 0:
                raise DomainError("beta must be nonnegative")

    @classmethod
    def uniform(cls) -> "RateSchedule":
        return cls(kind=UNIFORM)

    @classmethod
    def slow_site(cls, alpha: float, beta: float) -> "RateSchedule":
        """Slow site with g(n) = alpha * n**-beta."""
        return cls(kind=SLOW_SITE, form=POWER_LAW, alpha=alpha, beta=beta)

    @classmethod
    def slow_site_perturbed(cls, c: float = 1.0,
                            o1: Callable[[int], float] | None = None) -> "RateSchedule":
        """Slow (or fast) site with g(n) = 1 + o(1); default o(1) = c/sqrt(n)."""
        return cls(kind=SLOW_SITE, form=PERTURBED_UNIT, c=c, o1=o1)

    @classmethod
    def slow_bonds(cls, k: int, alpha: float, beta: float) -> "RateSchedule":
        """k neighboring slow bonds of rate alpha * n**-beta."""
        return cls(kind=SLOW_BONDS, form=POWER_LAW, alpha=alpha, beta=beta, k=int(k))

    def g(self, n: int) -> float:
        """Defect rate at scale n (1.0 for the uniform schedule)."""
        if n < 3:
            raise DomainError("scale n must be at least 3")
        if self.kind == UNIFORM:
            return 1.0
        if self.form == POWER_LAW:
            value = self.alpha * float(n) ** (-self.beta)
        else:
            value = 1.0 + (self.o1(n) if self.o1 is not None else self.c / math.sqrt(n))
        if value <= 0:
            raise DomainError(f"rate g({n}) = {value} is not positive")
        return value

    def site_rate(self, n: int, x: int) -> float:
        """Rate attached to jumps leaving site x (slow-site and uniform kinds)."""
        if self.kind == SLOW_BONDS:
            raise DomainError("slow-bond rates attach to bonds, not sites")
        if self.kind == SLOW_SITE and x == 0:
            return self.g(n)
        return 1.0

    def bond_rate(self, n: int, bond: int) -> float:
        """Rate attached to both directions across the bond {bond, bond+1}."""
        if self.kind == SLOW_BONDS and 0 <= bond < self.k:
            return self.g(n)
        return 1.0

    def directed_rate(self, n: int, lattice: Lattice, x: int, y: int) -> float:
        """Rate of the jump x -> y ignoring occupancies."""
        if self.kind == SLOW_BONDS:
            return self.bond_rate(n, lattice.bond_label(x, y))
        return self.site_rate(n, x)


def jump_rate(schedule: RateSchedule, n: int, config: Configuration,
              x: int, direction: int) -> float:
    """Rate of the particle jump from x to x+direction in configuration config.

    Zero whenever the source is empty or the target occupied; otherwise the
    schedule's rate for the move (attached to the departing site for the
    slow-site kind, to the crossed bond for the slow-bond kind).
    """
    if direction not in (-1, 1):
        raise DomainError("direction must be +1 or -1")
    lat = config.lattice
    y = x + direction
    if lat.geometry == LINE and not lat.contains(y):
        return 0.0
    if lat.geometry == TORUS:
        x, y = x % lat.size, y % lat.size
    occupied = config[x] == 1 and config[y] == 0
    if not occupied:
        return 0.0
    return schedule.directed_rate(n, lat, x, y)
