"""Continuous-time evolution of exclusion configurations.

Two interchangeable engines sample the same Markov process: an exact
event-driven Gillespie loop (the production engine, O(1) work per jump)
and a per-site Poisson-clock engine that realizes the classic coupling
construction.  All user-facing times are macroscopic; microscopically the
process runs at rate n**2 (diffusive scaling).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from . import _kernels as _k
from .errors import DomainError, OrderingError
from .model import (LINE, TORUS, SLOW_BONDS, SLOW_SITE, Configuration,
                    Lattice, RateSchedule, jump_rate, swap)

GILLESPIE = "gillespie"
GRAPHICAL = "graphical"

HYDRODYNAMIC = "hydrodynamic"
FLUCTUATION = "fluctuation"


@dataclass(frozen=True)
class SimClock:
    """Macroscopic time t paired with its microscopic counterpart t * n**2."""

    t: float
    n: int
    EXPONENT: ClassVar[int] = 2

    @property
    def tau(self) -> float:
        return self.t * float(self.n) ** SimClock.EXPONENT

    @classmethod
    def from_micro(cls, tau: float, n: int) -> "SimClock":
        return cls(tau / float(n) ** cls.EXPONENT, n)


def jump_tables(lattice: Lattice, schedule: RateSchedule, n: int):
    """Directed-jump arrays for the kernels.

    Returns (jsrc, jdst, jcls, rate_j, g): endpoints in storage indices,
    the rate class per directed jump (0 unit, 1 defect) and the defect
    rate value g(n).
    """
    S = lattice.n_sites
    B = lattice.n_bonds
    periodic = lattice.geometry == TORUS
    left = np.arange(B, dtype=np.int64)
    right = (left + 1) % S if periodic else left + 1
    jsrc = np.empty(2 * B, dtype=np.int64)
    jdst = np.empty(2 * B, dtype=np.int64)
    jsrc[0::2] = left
    jdst[0::2] = right
    jsrc[1::2] = right
    jdst[1::2] = left
    jcls = np.zeros(2 * B, dtype=np.uint8)
    g = schedule.g(n)
    if schedule.kind == SLOW_SITE:
        jcls[jsrc == lattice.origin_index] = 1
    elif schedule.kind == SLOW_BONDS:
        first = 0 if periodic else lattice.origin_index
        for b in range(first, first + schedule.k):
            if b >= B:
                raise DomainError("slow bonds do not fit on this lattice")
            jcls[2 * b] = 1
            jcls[2 * b + 1] = 1
    rate_j = np.where(jcls == 1, g, 1.0)
    return jsrc, jdst, jcls, rate_j, g


def _check_scale(lattice: Lattice, n: int):
    if lattice.geometry == TORUS and n != lattice.size:
        raise DomainError("on the torus the scale n must equal the lattice size")
    if n < 3:
        raise DomainError("scale n must be at least 3")


@dataclass
class EventStream:
    """Lazily realized Poisson clocks, one pair per site (one per direction).

    The clocks are splitmix streams keyed by (seed, site, direction), so two
    streams built with the same arguments produce identical arrival times;
    evolving two configurations with one stream yields the monotone
    coupling.  Unit clocks ring at rate 1, defect clocks at rate g(n).
    """

    lattice: Lattice
    schedule: RateSchedule
    n: int
    seed: int
    position: float = 0.0

    def __post_init__(self):
        _check_scale(self.lattice, self.n)
        jsrc, jdst, jcls, rate_j, g = jump_tables(self.lattice, self.schedule,
                                                  self.n)
        self._jsrc = jsrc
        self._jdst = jdst
        self._rate_j = rate_j
        self._clock_state = np.empty(rate_j.shape[0], dtype=np.uint64)
        self._clock_next = np.empty(rate_j.shape[0], dtype=np.float64)
        self._ht = np.empty(rate_j.shape[0], dtype=np.float64)
        self._hc = np.empty(rate_j.shape[0], dtype=np.int64)
        _k.init_clocks(np.uint64(self.seed), rate_j, self._clock_state,
                       self._clock_next)

    def next_arrivals(self) -> np.ndarray:
        """Pending arrival time of every clock (microscopic units)."""
        return self._clock_next.copy()


def graphical_step(config: Configuration, events: EventStream,
                   until: float) -> Configuration:
    """Process all clock arrivals up to microscopic time `until`.

    At each arrival the corresponding particle moves iff its source site is
    occupied and its target empty; otherwise the ring is a no-op.
    """
    if until < events.position:
        raise DomainError("stream already consumed past the requested time")
    if config.lattice != events.lattice:
        raise DomainError("configuration and event stream lattices differ")
    occ = np.array(config.occupancy, dtype=np.uint8)
    no_samples = np.zeros(0, dtype=np.float64)
    no_prof = np.zeros((0, 0), dtype=np.uint8)
    _k.graphical_run(occ, events._jsrc, events._jdst, events._rate_j,
                     events._clock_state, events._clock_next, until,
                     no_samples, False, no_prof, events._ht, events._hc)
    events.position = until
    return Configuration(config.lattice, occ)


def coupled_evolve(lower: Configuration, upper: Configuration,
                   events: EventStream, until: float):
    """Evolve an ordered pair by the same clock realization.

    Requires lower <= upper sitewise; the shared randomness preserves the
    order (attractiveness), which downstream checks rely on.
    """
    if np.any(lower.occupancy > upper.occupancy):
        raise OrderingError("initial pair is not sitewise ordered")
    if until < events.position:
        raise DomainError("stream already consumed past the requested time")
    occ_lo = np.array(lower.occupancy, dtype=np.uint8)
    occ_hi = np.array(upper.occupancy, dtype=np.uint8)
    no_samples = np.zeros(0, dtype=np.float64)
    _k.coupled_run(occ_lo, occ_hi, events._jsrc, events._jdst, events._rate_j,
                   events._clock_state, events._clock_next, until,
                   no_samples, events._ht, events._hc)
    events.position = until
    return (Configuration(lower.lattice, occ_lo),
            Configuration(upper.lattice, occ_hi))


def gillespie_step(config: Configuration, schedule: RateSchedule, n: int,
                   rng: np.random.Generator):
    """One event of the embedded jump chain: (next configuration, waiting time).

    The waiting time is Exponential(total rate); the executed jump is chosen
    with probability proportional to its rate.  A frozen configuration
    (zero total rate) returns itself with waiting time +inf.
    """
    _check_scale(config.lattice, n)
    lat = config.lattice
    moves = []
    rates = []
    for x in lat.sites():
        for direction in (-1, 1):
            r = jump_rate(schedule, n, config, int(x), direction)
            if r > 0.0:
                moves.append((int(x), int(x) + direction))
                rates.append(r)
    total = float(sum(rates))
    if total <= 0.0:
        return config, math.inf
    wait = rng.exponential(1.0 / total)
    w = rng.random() * total
    acc = 0.0
    chosen = moves[-1]
    for mv, r in zip(moves, rates):
        acc += r
        if w < acc:
            chosen = mv
            break
    return swap(config, chosen[0], chosen[1]), wait


@dataclass(frozen=True)
class Trajectory:
    """Sampled path of one simulation run.

    `times` are macroscopic, strictly increasing, starting at 0.  `series`
    holds the online accumulators recorded at those times; `events`, when
    requested, holds every executed jump as (micro time, src index, dst
    index).  Immutable once built.
    """

    lattice: Lattice
    schedule: RateSchedule
    n: int
    seed: int
    engine: str
    mode: str
    times: np.ndarray
    profiles: np.ndarray | None
    series: dict
    events: tuple | None
    frozen_at_sample: int
    n_events: int
    integral_mode: str
    instrument: object = None

    def configuration(self, k: int) -> Configuration:
        if self.profiles is None:
            raise DomainError("profiles were not recorded for this run")
        return Configuration(self.lattice, self.profiles[k].copy())


def _sample_times(t_samples) -> np.ndarray:
    ts = np.atleast_1d(np.asarray(t_samples, dtype=np.float64))
    if ts.size == 0 or ts[0] != 0.0:
        ts = np.concatenate(([0.0], ts))
    if np.any(np.diff(ts) <= 0):
        raise DomainError("sample times must be strictly increasing")
    return ts


def _instrument_weights(instrument, lattice, n, mode, measure):
    u = lattice.sites().astype(np.float64) / n
    h = np.asarray(instrument(u), dtype=np.float64)
    if mode == HYDRODYNAMIC:
        return h / n, 0.0
    if measure is None:
        raise DomainError("fluctuation mode needs the centering measure")
    w = h / math.sqrt(n)
    center = float(np.dot(w, measure.marginals))
    return w, center


def simulate(lattice: Lattice, schedule: RateSchedule, n: int, init,
             t_samples, seed: int, *, engine: str = GILLESPIE,
             instrument=None, mode: str = HYDRODYNAMIC, measure=None,
             record_profiles: bool = True, store_events: bool = False,
             max_events: int = 4_000_000, track_kv: bool = False,
             track_vacancy: bool = True, defect_rings=None) -> Trajectory:
    """Run one replica and sample it at the given macroscopic times.

    `init` is a Configuration, or any object with a `sample(lattice, rng)`
    method (a product measure), in which case the initial state is drawn
    from a seed-derived generator.  With `instrument` set (a test function
    matching the lattice geometry), the run maintains the pairing/field
    statistic, its Dynkin drift integral and the integrated carre du champ,
    all accumulated exactly between events.

    `defect_rings`, given as (macro ring times, directions in {-1,+1}),
    realizes the slow-site exit clocks as this exogenous stream instead of
    sampling them: the listed rings are attempted exactly at the listed
    times (no-ops when blocked) and no other defect jumps occur.  Used by
    stratified estimators that condition on the exit-clock count.
    """
    _check_scale(lattice, n)
    ts = _sample_times(t_samples)
    tau = ts * float(n) ** 2

    ss = np.random.SeedSequence(seed)
    init_state, kernel_seed = ss.generate_state(2, dtype=np.uint64)
    if isinstance(init, Configuration):
        config = init
    else:
        config = init.sample(lattice, np.random.default_rng(init_state))
    if config.lattice != lattice:
        raise DomainError("initial configuration lattice mismatch")

    occ = np.array(config.occupancy, dtype=np.uint8)
    S = lattice.n_sites
    K = ts.size
    out_prof = np.empty((K, S), dtype=np.uint8) if record_profiles \
        else np.zeros((0, 0), dtype=np.uint8)

    if engine == GRAPHICAL:
        if instrument is not None or store_events or track_kv:
            raise DomainError(
                "instrumented runs use the gillespie engine; the graphical "
                "engine records occupancies only")
        events = EventStream(lattice, schedule, n, int(kernel_seed))
        _k.graphical_run(occ, events._jsrc, events._jdst, events._rate_j,
                         events._clock_state, events._clock_next,
                         float(tau[-1]), tau, record_profiles, out_prof,
                         events._ht, events._hc)
        series = {}
        return Trajectory(lattice, schedule, n, seed, engine, mode, ts,
                          out_prof if record_profiles else None, series,
                          None, -1, -1, "none")
    if engine != GILLESPIE:
        raise DomainError(f"unknown engine {engine!r}")

    jsrc, jdst, jcls, rate_j, g = jump_tables(lattice, schedule, n)
    J = jsrc.shape[0]
    instrumented = instrument is not None
    if instrumented:
        wgt, center = _instrument_weights(instrument, lattice, n, mode, measure)
        xi = np.where(jcls == 1, g, 1.0)
        step = wgt[jdst] - wgt[jsrc]
        dcontrib = float(n) ** 2 * xi * step
        gcontrib = float(n) ** 2 * xi * step * step
    else:
        wgt = np.zeros(0, dtype=np.float64)
        center = 0.0
        dcontrib = np.zeros(0, dtype=np.float64)
        gcontrib = np.zeros(0, dtype=np.float64)

    if track_kv:
        if schedule.kind == SLOW_BONDS:
            raise DomainError("defect-current tracking expects a slow site")
        kv0 = lattice.origin_index
        kv1 = lattice.index(1)
        kv_a = float(n) ** 1.5
        kv_b = float(n) ** 1.5 * g
    else:
        kv0 = kv1 = -1
        kv_a = kv_b = 0.0

    if defect_rings is not None:
        if instrumented:
            raise DomainError("forced defect rings do not support instruments")
        if schedule.kind != SLOW_SITE:
            raise DomainError("forced rings realize slow-site exit clocks")
        ring_t, ring_dir = defect_rings
        ring_t = np.asarray(ring_t, dtype=np.float64)
        if np.any(np.diff(ring_t) < 0) or np.any(ring_t < 0):
            raise DomainError("ring times must be sorted and nonnegative")
        forced_tau = ring_t * float(n) ** 2
        # the two exit jumps: origin -> origin+1 and origin -> origin-1
        exits = np.flatnonzero(jcls == 1)
        right = exits[jdst[exits] == lattice.index(1)][0]
        left = exits[jdst[exits] == lattice.index(-1)][0]
        forced_j = np.where(np.asarray(ring_dir) > 0, right,
                            left).astype(np.int32)
    else:
        forced_tau = np.zeros(0, dtype=np.float64)
        forced_j = np.zeros(0, dtype=np.int32)

    cap = int(max_events) if store_events else 0
    ev_tau = np.empty(cap, dtype=np.float64)
    ev_src = np.empty(cap, dtype=np.int32)
    ev_dst = np.empty(cap, dtype=np.int32)
    items0 = np.empty(J, dtype=np.int32)
    items1 = np.empty(J, dtype=np.int32)
    pos = np.empty(J, dtype=np.int32)
    bond_active = np.empty(lattice.n_bonds, dtype=np.int32)
    out_scal = np.zeros((K, 5), dtype=np.float64)

    nev, frozen_at, overflow = _k.gillespie_run(
        occ, jsrc, jdst, jcls, lattice.n_bonds,
        lattice.geometry == TORUS, g, 1.0 / float(n) ** 2,
        tau, np.uint64(kernel_seed), instrumented, wgt, dcontrib, gcontrib,
        lattice.origin_index if track_vacancy else -1, kv0, kv1, kv_a, kv_b,
        record_profiles, out_prof, out_scal,
        cap, ev_tau, ev_src, ev_dst, forced_tau, forced_j,
        items0, items1, pos, bond_active)
    if overflow:
        raise RuntimeError(
            f"event storage overflow after {nev} events; raise max_events "
            "or use the online integral mode")

    series = {}
    if track_vacancy:
        series["origin_vacancy_integral"] = out_scal[:, 3].copy()
    if instrumented:
        stat = out_scal[:, 0] - center
        series["statistic"] = stat
        series["drift_integral"] = out_scal[:, 1].copy()
        series["martingale"] = stat - stat[0] - out_scal[:, 1]
        series["quadratic_variation"] = out_scal[:, 2].copy()
    if track_kv:
        series["defect_current_integral"] = out_scal[:, 4].copy()

    events_out = None
    if store_events:
        events_out = (ev_tau[:nev].copy(), ev_src[:nev].copy(),
                      ev_dst[:nev].copy())
    for arr in series.values():
        arr.setflags(write=False)
    return Trajectory(lattice, schedule, n, seed, engine, mode, ts,
                      out_prof if record_profiles else None, series,
                      events_out, frozen_at, nev,
                      "events" if store_events else "online",
                      instrument=instrument)
