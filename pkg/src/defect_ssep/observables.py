"""Empirical-measure functionals and the martingale decomposition.

Everything here is a deterministic function of a configuration or of a
sampled trajectory: pairings of the empirical measure with test functions,
block averages next to the defect, the centered and sqrt(n)-normalized
fluctuation field, the action of the speeded-up generator on those
functionals (computed two algebraically identical ways, which is asserted),
and the Dynkin martingale with its integrated carre du champ.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import (AlignmentError, ConsistencyError, DomainError,
                     ProvenanceError)
from .measures import INVARIANT, ProductMeasure
from .model import (LINE, SLOW_BONDS, SLOW_SITE, TORUS, UNIFORM,
                    Configuration, Lattice, RateSchedule)

SUPPORT_CUTOFF = 1e-14

HYDRODYNAMIC = "hydrodynamic"
FLUCTUATION = "fluctuation"


def _site_coords(lattice: Lattice, n: int) -> np.ndarray:
    return lattice.sites().astype(np.float64) / n


def _eval_on_lattice(H, lattice: Lattice, n: int) -> np.ndarray:
    domain = getattr(H, "domain", "line" if lattice.geometry == LINE else "torus")
    if lattice.geometry == LINE and domain != "line":
        raise DomainError("line lattices need line-domain test functions")
    if lattice.geometry == TORUS and domain == "line":
        raise DomainError("torus lattices need periodic test functions")
    return np.asarray(H(_site_coords(lattice, n)), dtype=np.float64)


def pair(config: Configuration, H, n: int) -> float:
    """Empirical-measure pairing: mass 1/n per particle, weighted by H(x/n)."""
    h = _eval_on_lattice(H, config.lattice, n)
    return float(h @ config.occupancy) / n


def block_averages(config: Configuration, eps: float, n: int):
    """Window means over {1..floor(eps n)} and {-floor(eps n)..-1}.

    Neither window contains the defect site 0.  Windows of zero length or
    reaching around to overlap are rejected.
    """
    w = int(math.floor(eps * n))
    lat = config.lattice
    if w < 1:
        raise DomainError("window must contain at least one site")
    limit = lat.size / 2 if lat.geometry == TORUS else lat.radius + 1
    if w >= limit:
        raise DomainError("windows overlap around the lattice")
    occ = config.occupancy
    right = [occ[lat.index(x)] for x in range(1, w + 1)]
    left = [occ[lat.index(-x)] for x in range(1, w + 1)]
    return float(np.mean(right)), float(np.mean(left))


def fluctuation_field(config: Configuration, H, measure: ProductMeasure,
                      n: int) -> float:
    """Centered, sqrt(n)-normalized pairing of the occupation field with H.

    Defined at equilibrium: the centering means come from an invariant
    product measure.  Sites where |H| is below 1e-14 of its maximum are
    skipped (test functions decay fast, so the sum has bounded support).
    """
    if measure.provenance != INVARIANT:
        raise ProvenanceError("the field is centered with invariant marginals")
    if measure.lattice != config.lattice:
        raise DomainError("measure and configuration lattices differ")
    h = _eval_on_lattice(H, config.lattice, n)
    cutoff = SUPPORT_CUTOFF * np.abs(h).max() if h.size else 0.0
    support = np.abs(h) > cutoff
    centered = config.occupancy[support] - measure.marginals[support]
    return float(h[support] @ centered) / math.sqrt(n)


# -- generator action --------------------------------------------------------

def _label_values(config: Configuration, h: np.ndarray):
    """(occupancy, H values) indexable by site label through lattice.index."""
    lat = config.lattice

    def occ_at(x):
        return int(config.occupancy[lat.index(x)])

    def h_at(x):
        return float(h[lat.index(x)])

    return occ_at, h_at


def _h_beyond_edge(H, lattice: Lattice, n: int, x: int) -> float:
    # line lattices: evaluate H analytically outside the truncation
    return float(np.asarray(H(np.array([x / n]))).item())


def _direct_action(config: Configuration, h: np.ndarray,
                   schedule: RateSchedule, n: int, scale: float) -> float:
    """Form (a): scale * sum over admissible jumps of xi * (H(dst) - H(src))."""
    from .dynamics import jump_tables
    jsrc, jdst, jcls, rate_j, g = jump_tables(config.lattice, schedule, n)
    occ = config.occupancy
    movable = (occ[jsrc] == 1) & (occ[jdst] == 0)
    return scale * float(np.sum(rate_j[movable]
                                * (h[jdst[movable]] - h[jsrc[movable]])))


def _laplacian_sum(config, H, h, n, exclude):
    """n * sum over x outside `exclude` of eta(x) * second difference of H."""
    lat = config.lattice
    sites = lat.sites()
    occ = config.occupancy.astype(np.float64)
    if lat.geometry == TORUS:
        hp = np.roll(h, -1)
        hm = np.roll(h, 1)
    else:
        hp = np.empty_like(h)
        hm = np.empty_like(h)
        hp[:-1] = h[1:]
        hm[1:] = h[:-1]
        hp[-1] = _h_beyond_edge(H, lat, n, lat.radius + 1)
        hm[0] = _h_beyond_edge(H, lat, n, -lat.radius - 1)
    d2 = hp + hm - 2.0 * h
    mask = ~np.isin(sites, exclude)
    return float(np.sum(d2[mask] * occ[mask]))


def _closed_form_hydro(config, H, h, schedule, n):
    lat = config.lattice
    occ_at, h_at = _label_values(config, h)
    if schedule.kind == SLOW_BONDS:
        a = schedule.alpha * float(n) ** (1.0 - schedule.beta)
        k = schedule.k
        bulk = _laplacian_sum(config, H, h, n, list(range(0, k + 1)))
        edge_hi = (n * (h_at(k + 1) - h_at(k))
                   + a * (h_at(k - 1) - h_at(k))) * occ_at(k)
        middle = 0.0
        for j in range(1, k):
            middle += a * (h_at(j + 1) + h_at(j - 1) - 2 * h_at(j)) * occ_at(j)
        edge_lo = (a * (h_at(1) - h_at(0))
                   + n * (h_at(-1) - h_at(0))) * occ_at(0)
        return n * bulk + edge_hi + middle + edge_lo
    g = schedule.g(n)
    bulk = _laplacian_sum(config, H, h, n, [0])
    d2_0 = h_at(1) + h_at(-1) - 2.0 * h_at(0)
    trap = g * d2_0 * occ_at(0)
    skew = (1.0 - g) * ((h_at(-1) - h_at(0)) * occ_at(0) * occ_at(-1)
                        + (h_at(1) - h_at(0)) * occ_at(0) * occ_at(1))
    return n * (bulk + trap + skew)


def _closed_form_fluct(config, H, h, schedule, n, p):
    if schedule.kind == SLOW_BONDS:
        raise DomainError("the fluctuation decomposition is for the slow site")
    lat = config.lattice
    occ_at, h_at = _label_values(config, h)
    g = schedule.g(n)
    s = float(n) ** 1.5
    occ = config.occupancy.astype(np.float64)
    centered = occ - p
    sites = lat.sites()
    if lat.geometry == TORUS:
        hp = np.roll(h, -1)
        hm = np.roll(h, 1)
    else:
        hp = np.empty_like(h)
        hm = np.empty_like(h)
        hp[:-1] = h[1:]
        hm[1:] = h[:-1]
        hp[-1] = _h_beyond_edge(H, lat, n, lat.radius + 1)
        hm[0] = _h_beyond_edge(H, lat, n, -lat.radius - 1)
    d2 = hp + hm - 2.0 * h
    mask = ~np.isin(sites, [-1, 0, 1])
    bulk = float(np.sum(d2[mask] * centered[mask]))

    near = ((h_at(2) + h_at(0) - 2 * h_at(1)) * (occ_at(1) - p)
            + (h_at(-2) + h_at(0) - 2 * h_at(-1)) * (occ_at(-1) - p))
    skew = (1.0 - g) * ((h_at(1) - h_at(0)) * occ_at(0) * occ_at(1)
                        + (h_at(-1) - h_at(0)) * occ_at(0) * occ_at(-1))
    d2_0 = h_at(1) + h_at(-1) - 2.0 * h_at(0)
    trap = g * d2_0 * occ_at(0)
    theta = -s * d2_0 * p
    return s * (bulk + near + skew + trap) + theta


def generator_action(config: Configuration, H, schedule: RateSchedule,
                     n: int, mode: str = HYDRODYNAMIC,
                     measure: ProductMeasure | None = None,
                     rtol: float = 1e-9) -> float:
    """Speeded-up generator applied to the pairing (or fluctuation field).

    Computes the value twice: (a) the direct rate-weighted sum of jump
    increments and (b) the closed-form decomposition into a discrete
    Laplacian plus defect boundary terms, and raises ConsistencyError if
    they disagree beyond `rtol` (they are algebraically identical).
    """
    lat = config.lattice
    h = _eval_on_lattice(H, lat, n)
    if mode == HYDRODYNAMIC:
        scale = float(n)  # n**2 * (1/n)
        direct = _direct_action(config, h, schedule, n, scale)
        closed = _closed_form_hydro(config, H, h, schedule, n)
    elif mode == FLUCTUATION:
        if measure is None or measure.provenance != INVARIANT:
            raise ProvenanceError("fluctuation mode centers with nu_p")
        scale = float(n) ** 1.5  # n**2 * (1/sqrt n)
        direct = _direct_action(config, h, schedule, n, scale)
        closed = _closed_form_fluct(config, H, h, schedule, n,
                                    measure.density)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    denom = max(1.0, abs(direct), abs(closed))
    if abs(direct - closed) > rtol * denom:
        raise ConsistencyError(
            f"generator-action forms disagree: {direct} vs {closed}")
    return direct


# -- trajectory functionals --------------------------------------------------

def _weights_for(trajectory, H, mode):
    lat = trajectory.lattice
    n = trajectory.n
    h = _eval_on_lattice(H, lat, n)
    if mode == HYDRODYNAMIC:
        return h / n
    return h / math.sqrt(n)


def martingale_decomposition(trajectory, H, schedule: RateSchedule,
                             mode: str | None = None,
                             measure: ProductMeasure | None = None):
    """Dynkin martingale path and its integrated carre du champ.

    If the trajectory was produced with online accumulators for this test
    function, those exact series are returned.  Otherwise the trajectory
    must carry its event log, and the decomposition is replayed event by
    event (an independent reimplementation of the online accumulation).
    """
    mode = mode or trajectory.mode
    if "martingale" in trajectory.series and trajectory.instrument is H:
        return (np.asarray(trajectory.series["martingale"]),
                np.asarray(trajectory.series["quadratic_variation"]))
    if trajectory.events is None:
        raise DomainError("need either online accumulators for this H or a "
                          "stored event log")
    if trajectory.profiles is None:
        raise DomainError("event replay needs the initial profile")

    from .dynamics import jump_tables
    lat = trajectory.lattice
    n = trajectory.n
    jsrc, jdst, jcls, rate_j, g = jump_tables(lat, schedule, n)
    wgt = _weights_for(trajectory, H, mode)
    n2 = float(n) ** 2
    dstep = n2 * rate_j * (wgt[jdst] - wgt[jsrc])
    gstep = n2 * rate_j * (wgt[jdst] - wgt[jsrc]) ** 2

    occ = trajectory.profiles[0].astype(np.uint8).copy()
    ev_tau, ev_src, ev_dst = trajectory.events
    sample_tau = trajectory.times * n2

    def drift_and_gamma():
        movable = (occ[jsrc] == 1) & (occ[jdst] == 0)
        return float(dstep[movable].sum()), float(gstep[movable].sum())

    F0 = float(wgt @ occ)
    F = F0
    D, G = drift_and_gamma()
    I_D = 0.0
    I_G = 0.0
    t = 0.0
    k = 0
    K = sample_tau.size
    mart = np.zeros(K)
    qv = np.zeros(K)
    ei = 0
    NE = ev_tau.size
    while k < K:
        t_next = ev_tau[ei] if ei < NE else np.inf
        while k < K and sample_tau[k] <= t_next:
            seg = (sample_tau[k] - t) / n2
            I_D += D * seg
            I_G += G * seg
            t = sample_tau[k]
            mart[k] = (F - F0) - I_D
            qv[k] = I_G
            k += 1
        if k >= K:
            break
        seg = (t_next - t) / n2
        I_D += D * seg
        I_G += G * seg
        t = t_next
        a, b = int(ev_src[ei]), int(ev_dst[ei])
        occ[a] = 0
        occ[b] = 1
        F += wgt[b] - wgt[a]
        D, G = drift_and_gamma()
        ei += 1
    return mart, qv


def origin_vacancy_functional(trajectory, t: float) -> float:
    """(n/t) times the exact time integral of vacancy at the origin.

    t must be one of the trajectory's sample times (the integral is
    accumulated online between events and recorded at samples).
    """
    if t <= 0:
        raise DomainError("t must be positive")
    times = trajectory.times
    k = int(np.argmin(np.abs(times - t)))
    if not math.isclose(times[k], t, rel_tol=1e-12, abs_tol=1e-15):
        raise AlignmentError(f"{t} is not a sample time of this trajectory")
    if "origin_vacancy_integral" not in trajectory.series:
        raise DomainError("vacancy tracking was disabled for this run")
    return trajectory.n / t * float(trajectory.series
                                    ["origin_vacancy_integral"][k])


def defect_current_integral(trajectory, t: float) -> float:
    """Integrated centered current across the origin, scaled by n**(3/2)."""
    times = trajectory.times
    k = int(np.argmin(np.abs(times - t)))
    if not math.isclose(times[k], t, rel_tol=1e-12, abs_tol=1e-15):
        raise AlignmentError(f"{t} is not a sample time of this trajectory")
    if "defect_current_integral" not in trajectory.series:
        raise DomainError("defect-current tracking was disabled for this run")
    return float(trajectory.series["defect_current_integral"][k])
