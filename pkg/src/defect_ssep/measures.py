"""Initial and invariant measures, plus the exact small-system oracle.

The dynamics with exit rate g at the origin is reversible for the Bernoulli
product measure whose origin marginal is (p/g) / ((1-p) + p/g) and whose
other marginals are p.  This module builds such measures, samples from
them, and provides dense-generator checks (stationarity, detailed balance,
Dirichlet form, relative entropy) on lattices of at most 12 sites.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (AbsoluteContinuityError, CapacityError, ConsistencyError,
                     DomainError, NormalizationError, ProvenanceError)
from .model import (LINE, SLOW_BONDS, SLOW_SITE, Configuration, Lattice,
                    RateSchedule)

INVARIANT = "invariant"
PROFILE = "profile"

STATE_SPACE_CAP = 12


def marginal_at_origin(p: float, g: float) -> float:
    """Origin occupation probability of the reversible measure.

    Monotone decreasing in g; tends to 1 as g -> 0 (the trap fills up).
    """
    if not 0.0 < p < 1.0:
        raise DomainError("density p must lie strictly between 0 and 1")
    if g <= 0.0:
        raise DomainError("rate g must be positive")
    r = p / g
    return r / ((1.0 - p) + r)


@dataclass(frozen=True)
class ProductMeasure:
    """Site-independent Bernoulli measure with per-site means `marginals`."""

    lattice: Lattice
    marginals: np.ndarray
    provenance: str
    density: float | None = None
    rate: float | None = None

    def __post_init__(self):
        m = np.ascontiguousarray(self.marginals, dtype=np.float64)
        if m.shape != (self.lattice.n_sites,):
            raise DomainError("marginal vector does not match the lattice")
        if np.any((m < 0.0) | (m > 1.0)):
            raise DomainError("marginals must lie in [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "marginals", m)

    @property
    def compressibility(self) -> float:
        """chi(p) = p(1-p); defined for invariant provenance only."""
        if self.provenance != INVARIANT:
            raise ProvenanceError("compressibility needs an invariant measure")
        return self.density * (1.0 - self.density)

    def mean_at(self, x: int) -> float:
        return float(self.marginals[self.lattice.index(x)])

    def sample(self, lattice: Lattice, rng: np.random.Generator,
               condition_origin: bool = False) -> Configuration:
        """Independent Bernoulli draw per site; optionally rejection-sample
        until the origin is occupied."""
        if lattice != self.lattice:
            raise DomainError("lattice mismatch")
        if condition_origin and self.marginals[lattice.origin_index] <= 0.0:
            raise DomainError("cannot condition on an almost-surely empty origin")
        while True:
            occ = (rng.random(lattice.n_sites) < self.marginals)
            if not condition_origin or occ[lattice.origin_index]:
                return Configuration(lattice, occ.astype(np.uint8))

    def log_weight(self, occ: np.ndarray) -> float:
        """log probability of one configuration."""
        m = self.marginals
        with np.errstate(divide="ignore"):
            lw = np.where(occ == 1, np.log(m), np.log1p(-m))
        return float(lw.sum())


def equilibrium_measure(lattice: Lattice, schedule: RateSchedule, n: int,
                        p: float) -> ProductMeasure:
    """The reversible product measure matched to the schedule at scale n.

    Slow-site schedules tilt the origin marginal; uniform and slow-bond
    schedules (bond rates are symmetric) keep the homogeneous Bernoulli(p).
    """
    if not 0.0 < p < 1.0:
        raise DomainError("density p must lie strictly between 0 and 1")
    m = np.full(lattice.n_sites, p, dtype=np.float64)
    g = schedule.g(n)
    if schedule.kind == SLOW_SITE:
        m[lattice.origin_index] = marginal_at_origin(p, g)
    return ProductMeasure(lattice, m, INVARIANT, density=p, rate=g)


# -- initial profiles --------------------------------------------------------

@dataclass(frozen=True)
class InitialProfile:
    """Macroscopic initial density u -> gamma(u) on the unit torus.

    Profiles must be bounded below by a positive constant; they may be
    discontinuous at u = 0 or u = 1/2 (step data), with the value at the
    jump taken from the right.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    lower_bound: float

    def __call__(self, u):
        return self.fn(np.asarray(u, dtype=np.float64))

    def __post_init__(self):
        if self.lower_bound <= 0.0:
            raise DomainError("profiles must satisfy inf gamma > 0")


def constant_profile(c: float) -> InitialProfile:
    if not 0.0 < c <= 1.0:
        raise DomainError("constant profile must lie in (0, 1]")
    return InitialProfile(f"constant({c})", lambda u: np.full_like(u, c), c)


def cosine_profile(mean: float = 0.5, amplitude: float = 0.25,
                   harmonics: int = 1) -> InitialProfile:
    lo = mean - abs(amplitude)
    hi = mean + abs(amplitude)
    if lo <= 0.0 or hi > 1.0:
        raise DomainError("cosine profile leaves (0, 1]")
    return InitialProfile(
        f"cosine({mean},{amplitude},{harmonics})",
        lambda u: mean + amplitude * np.cos(2.0 * math.pi * harmonics * u),
        lo)


def step_profile(left: float = 0.8, right: float = 0.2) -> InitialProfile:
    """left on (0, 1/2), right on (1/2, 1); right-continuous at the jumps."""
    lo = min(left, right)
    if lo <= 0.0 or max(left, right) > 1.0:
        raise DomainError("step profile leaves (0, 1]")
    return InitialProfile(
        f"step({left},{right})",
        lambda u: np.where(np.mod(u, 1.0) < 0.5, left, right),
        lo)


def ramp_profile(low: float = 0.2, high: float = 0.8) -> InitialProfile:
    if low <= 0.0 or high > 1.0 or high < low:
        raise DomainError("ramp profile leaves (0, 1]")
    return InitialProfile(
        f"ramp({low},{high})",
        lambda u: low + (high - low) * np.mod(u, 1.0),
        low)


def tabulated_profile(values) -> InitialProfile:
    """Piecewise-linear profile through equally spaced samples on [0, 1)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise DomainError("need at least two tabulated values")
    if v.min() <= 0.0 or v.max() > 1.0:
        raise DomainError("tabulated values leave (0, 1]")
    grid = np.arange(v.size) / v.size

    def fn(u):
        return np.interp(np.mod(u, 1.0), grid, v, period=1.0)

    return InitialProfile(f"tabulated[{v.size}]", fn, float(v.min()))


PROFILE_CATALOG = {
    "constant": constant_profile,
    "cosine": cosine_profile,
    "step": step_profile,
    "ramp": ramp_profile,
}


def profile_measure(lattice: Lattice, profile: InitialProfile,
                    n: int) -> ProductMeasure:
    """Product measure with marginals gamma(x/n) on the given lattice."""
    u = lattice.sites().astype(np.float64) / n
    return ProductMeasure(lattice, profile(u), PROFILE)


# -- exact oracle ------------------------------------------------------------

def _occupancies(n_sites: int) -> np.ndarray:
    """All configurations as rows of a (2**n, n) 0/1 array.

    Row index equals the bitmask with site 0 as the most significant bit,
    matching the encoding used by the compiled batch kernels.
    """
    codes = np.arange(1 << n_sites, dtype=np.int64)
    shifts = np.arange(n_sites - 1, -1, -1)
    return ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def exact_generator(lattice: Lattice, schedule: RateSchedule,
                    n: int) -> np.ndarray:
    """Dense generator matrix over all 2**n_sites configurations.

    Off-diagonal entry (eta, eta') is the jump rate of the swap turning eta
    into eta'; rows sum to zero.  Capped at 12 sites.
    """
    S = lattice.n_sites
    if S > STATE_SPACE_CAP:
        raise CapacityError(f"{S} sites exceed the exact-oracle cap "
                            f"({STATE_SPACE_CAP})")
    from .dynamics import jump_tables
    jsrc, jdst, jcls, rate_j, g = jump_tables(lattice, schedule, n)
    occ = _occupancies(S)
    N = occ.shape[0]
    L = np.zeros((N, N))
    codes = np.arange(N, dtype=np.int64)
    for j in range(jsrc.shape[0]):
        a, b = int(jsrc[j]), int(jdst[j])
        rate = float(rate_j[j])
        movable = (occ[:, a] == 1) & (occ[:, b] == 0)
        src_codes = codes[movable]
        dst_codes = src_codes - (1 << (S - 1 - a)) + (1 << (S - 1 - b))
        L[src_codes, dst_codes] += rate
        L[src_codes, src_codes] -= rate
    return L


def state_weights(measure: ProductMeasure) -> np.ndarray:
    """Probability of every configuration under a product measure."""
    S = measure.lattice.n_sites
    if S > STATE_SPACE_CAP:
        raise CapacityError("state enumeration capped at 12 sites")
    occ = _occupancies(S)
    m = measure.marginals
    w = np.where(occ == 1, m[None, :], 1.0 - m[None, :])
    return np.prod(w, axis=1)


def stationarity_residual(measure: ProductMeasure,
                          generator: np.ndarray) -> float:
    """max |nu^T L| over states; zero iff nu is invariant."""
    nu = state_weights(measure)
    return float(np.abs(nu @ generator).max())


def verify_detailed_balance(measure: ProductMeasure,
                            generator: np.ndarray) -> float:
    """max over ordered pairs of |nu(eta) r(eta,eta') - nu(eta') r(eta',eta)|."""
    nu = state_weights(measure)
    flux = nu[:, None] * generator
    off = flux - flux.T
    np.fill_diagonal(off, 0.0)
    return float(np.abs(off).max())


def dirichlet_form(f: np.ndarray, measure: ProductMeasure,
                   schedule: RateSchedule, n: int) -> float:
    """Energy of the density f: the explicit bond-by-bond sum.

    f is a density with respect to the measure (nonnegative, integrates to
    one).  For a slow-site schedule the four origin-bond terms carry their
    own rates (g for exits, 1 for entries); all other bonds contribute the
    plain squared gradient of sqrt(f).  Agrees with -<sqrt f, L sqrt f>.
    """
    lat = measure.lattice
    S = lat.n_sites
    if S > STATE_SPACE_CAP:
        raise CapacityError("state enumeration capped at 12 sites")
    if schedule.kind == SLOW_BONDS:
        raise DomainError("the explicit form is written for slow-site or "
                          "uniform schedules")
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != (1 << S) or np.any(f < 0):
        raise NormalizationError("f must be a nonnegative state vector")
    nu = state_weights(measure)
    total = float(f @ nu)
    if abs(total - 1.0) > 1e-9:
        raise NormalizationError(f"f integrates to {total}, not 1")

    from .dynamics import jump_tables
    jsrc, jdst, jcls, rate_j, g = jump_tables(lat, schedule, n)
    occ = _occupancies(S)
    codes = np.arange(1 << S, dtype=np.int64)
    sq = np.sqrt(f)
    value = 0.0
    # one term per directed jump: (xi/2) * int eta(src)(1-eta(dst))
    #   (sqrt f(eta^swap) - sqrt f(eta))^2 dnu
    for j in range(jsrc.shape[0]):
        a, b = int(jsrc[j]), int(jdst[j])
        rate = float(rate_j[j])
        movable = (occ[:, a] == 1) & (occ[:, b] == 0)
        src_codes = codes[movable]
        dst_codes = src_codes - (1 << (S - 1 - a)) + (1 << (S - 1 - b))
        diff = sq[dst_codes] - sq[src_codes]
        value += 0.5 * rate * float((diff * diff) @ nu[src_codes])
    return value


def dirichlet_form_matrix(f: np.ndarray, measure: ProductMeasure,
                          generator: np.ndarray) -> float:
    """-<sqrt f, L sqrt f>_nu computed from the generator matrix."""
    nu = state_weights(measure)
    sq = np.sqrt(np.asarray(f, dtype=np.float64))
    return float(-(sq * (generator @ sq)) @ nu)


def relative_entropy(mu: np.ndarray, measure: ProductMeasure):
    """H(mu | nu) and the linear-growth constant K0.

    K0 is built from the pointwise lower bound nu(eta) >=
    (p ^ (1-p))**(n-1) * (m0 ^ (1-m0)), so H(mu|nu) <= K0 * n holds for
    every probability vector mu.
    """
    if measure.provenance != INVARIANT:
        raise ProvenanceError("entropy bound is stated against nu_p")
    nu = state_weights(measure)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != nu.shape or np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-9:
        raise NormalizationError("mu must be a probability vector over states")
    support = mu > 0
    if np.any(nu[support] <= 0.0):
        raise AbsoluteContinuityError("mu charges a nu-null configuration")
    h = float(np.sum(mu[support] * np.log(mu[support] / nu[support])))
    p = measure.density
    S = measure.lattice.n_sites
    m0 = measure.mean_at(0)
    k0 = ((S - 1) * (-math.log(min(p, 1.0 - p)))
          + (-math.log(min(m0, 1.0 - m0)))) / S
    if h > k0 * S * (1.0 + 1e-12) + 1e-12:
        raise ConsistencyError(f"entropy {h} exceeds its bound {k0 * S}")
    return h, k0
