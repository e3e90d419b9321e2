"""Compiled event loops for the exclusion dynamics.

Two engines:

* a rejection-free Gillespie loop with an indexed rate structure (two rate
  classes: unit bonds and defect bonds), O(1) work per executed jump;
* a Poisson-clock loop ("graphical" engine) holding one lazily sampled
  clock per directed jump, driven by a replace-top binary heap, which lets
  two occupancy vectors be evolved by the same clock realization.

All randomness comes from an explicit splitmix64 state so runs are
bit-reproducible for a given seed, independent of threading.  Kernels are
compiled with ``nogil`` so replicas can run on a thread pool.
"""
import math

import numpy as np
from numba import njit

U64_GAMMA = np.uint64(0x9E3779B97F4A7C15)
U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
U64_MIX2 = np.uint64(0x94D049BB133111EB)
U64_ONE = np.uint64(1)
SH11 = np.uint64(11)
SH27 = np.uint64(27)
SH30 = np.uint64(30)
SH31 = np.uint64(31)
INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53

RECOMPUTE_EVERY = 1 << 20  # refresh running sums to cancel float drift


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> SH30)) * U64_MIX1
    z = (z ^ (z >> SH27)) * U64_MIX2
    return z ^ (z >> SH31)


@njit(cache=True, nogil=True, inline="always")
def _sm_next(state):
    state = state + U64_GAMMA
    return state, _mix64(state)


@njit(cache=True, nogil=True, inline="always")
def _u_half_open(z):
    # uniform in [0, 1)
    return float(z >> SH11) * INV_2_53


@njit(cache=True, nogil=True, inline="always")
def _u_open(z):
    # uniform in (0, 1]; safe for log
    return float((z >> SH11) + U64_ONE) * INV_2_53


@njit(cache=True, nogil=True, inline="always")
def derive_seed(seed, stream):
    return _mix64(seed ^ _mix64(np.uint64(stream) + U64_GAMMA))


# ---------------------------------------------------------------------------
# Gillespie engine
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _set_insert(j, cls, items0, items1, pos, n0, n1):
    if cls == 0:
        pos[j] = n0
        items0[n0] = j
        n0 += 1
    else:
        pos[j] = n1
        items1[n1] = j
        n1 += 1
    return n0, n1


@njit(cache=True, nogil=True, inline="always")
def _set_remove(j, cls, items0, items1, pos, n0, n1):
    p = pos[j]
    if cls == 0:
        n0 -= 1
        last = items0[n0]
        items0[p] = last
        pos[last] = p
    else:
        n1 -= 1
        last = items1[n1]
        items1[p] = last
        pos[last] = p
    pos[j] = -1
    return n0, n1


INF = np.inf


@njit(cache=True, nogil=True)
def gillespie_run(occ, jsrc, jdst, jcls, n_bonds, periodic, g, inv_n2,
                  sample_tau, seed, instrumented, wgt, dcontrib, gcontrib,
                  vac_idx, kv0, kv1, kv_a, kv_b,
                  record_prof, out_prof, out_scal,
                  events_cap, ev_tau, ev_src, ev_dst,
                  forced_tau, forced_j,
                  items0, items1, pos, bond_active):
    """Evolve occ in place, recording at the given microscopic sample times.

    out_scal rows are (F, drift integral, carre-du-champ integral, origin
    vacancy integral, defect-bond current integral) with all integrals in
    macroscopic time (d t = d tau * inv_n2).  Returns (events executed,
    sample index at which the lattice froze or -1, overflow flag).

    Each bond has at most one admissible direction (the occupied side), so
    membership is tracked per bond via bond_active (-1 or a directed jump
    id); the two class lists hold directed jump ids grouped by rate.

    When forced_tau is nonempty, the defect-class jumps are removed from
    the stochastic rate structure and instead attempted exactly at the
    given (sorted) times; this realizes the defect clocks as an exogenous
    stream for conditioned/stratified runs.  Forced mode supports only
    uninstrumented runs (the drift/carre-du-champ sums would need the
    defect terms).
    """
    S = occ.shape[0]
    J = jsrc.shape[0]
    K = sample_tau.shape[0]
    NF = forced_tau.shape[0]
    skip_defect = NF > 0

    n0 = 0
    n1 = 0
    for j in range(J):
        pos[j] = -1
    for b in range(n_bonds):
        bond_active[b] = -1
    for j in range(J):
        if occ[jsrc[j]] == 1 and occ[jdst[j]] == 0:
            if skip_defect and jcls[j] == 1:
                continue
            n0, n1 = _set_insert(j, jcls[j], items0, items1, pos, n0, n1)
            bond_active[j >> 1] = j

    F = 0.0
    D = 0.0
    G = 0.0
    if instrumented:
        for i in range(S):
            if occ[i] == 1:
                F += wgt[i]
        for i in range(n0):
            D += dcontrib[items0[i]]
            G += gcontrib[items0[i]]
        for i in range(n1):
            D += dcontrib[items1[i]]
            G += gcontrib[items1[i]]

    I_D = 0.0
    I_G = 0.0
    I_vac = 0.0
    I_kv = 0.0
    t = 0.0
    k = 0
    fi = 0
    nev = 0
    frozen_at = -1
    since_refresh = 0
    state = seed

    while k < K:
        R = n0 + n1 * g
        if R > 0.0:
            state, z = _sm_next(state)
            t_next = t - math.log(_u_open(z)) / R
        else:
            t_next = INF
            if frozen_at < 0 and fi >= NF:
                frozen_at = k

        forced = fi < NF and forced_tau[fi] <= t_next
        boundary = forced_tau[fi] if forced else t_next

        # emit samples due before the next state change
        while k < K and sample_tau[k] <= boundary:
            seg = (sample_tau[k] - t) * inv_n2
            if instrumented:
                I_D += D * seg
                I_G += G * seg
            if vac_idx >= 0:
                I_vac += (1.0 - occ[vac_idx]) * seg
            if kv0 >= 0:
                v = kv_a * occ[kv1] * (1 - occ[kv0]) \
                    - kv_b * occ[kv0] * (1 - occ[kv1])
                I_kv += v * seg
            t = sample_tau[k]
            out_scal[k, 0] = F
            out_scal[k, 1] = I_D
            out_scal[k, 2] = I_G
            out_scal[k, 3] = I_vac
            out_scal[k, 4] = I_kv
            if record_prof:
                for i in range(S):
                    out_prof[k, i] = occ[i]
            k += 1
        if k >= K:
            break

        # advance integrals to the state change
        seg = (boundary - t) * inv_n2
        if instrumented:
            I_D += D * seg
            I_G += G * seg
        if vac_idx >= 0:
            I_vac += (1.0 - occ[vac_idx]) * seg
        if kv0 >= 0:
            v = kv_a * occ[kv1] * (1 - occ[kv0]) \
                - kv_b * occ[kv0] * (1 - occ[kv1])
            I_kv += v * seg
        t = boundary

        if forced:
            j = forced_j[fi]
            fi += 1
            # attempted ring of an exogenous defect clock; no-op if blocked
            if not (occ[jsrc[j]] == 1 and occ[jdst[j]] == 0):
                continue
        else:
            state, z = _sm_next(state)
            w = _u_half_open(z) * R
            if w < n0:
                idx = int(w)
                if idx >= n0:
                    idx = n0 - 1
                j = items0[idx]
            else:
                w2 = (w - n0) / g
                idx = int(w2)
                if idx >= n1:
                    idx = n1 - 1
                j = items1[idx]

        a = jsrc[j]
        b = jdst[j]
        occ[a] = 0
        occ[b] = 1
        if instrumented:
            F += wgt[b] - wgt[a]
        if events_cap > 0:
            if nev >= events_cap:
                return nev, frozen_at, 1
            ev_tau[nev] = t
            ev_src[nev] = a
            ev_dst[nev] = b
        nev += 1

        bd = j >> 1
        for o in range(-1, 2):
            bb = bd + o
            if periodic:
                if bb < 0:
                    bb += n_bonds
                elif bb >= n_bonds:
                    bb -= n_bonds
            else:
                if bb < 0 or bb >= n_bonds:
                    continue
            jj = 2 * bb
            ol = occ[jsrc[jj]]
            orr = occ[jdst[jj]]
            if ol == 1 and orr == 0:
                want = jj
            elif ol == 0 and orr == 1:
                want = jj + 1
            else:
                want = -1
            if want >= 0 and skip_defect and jcls[want] == 1:
                want = -1
            have = bond_active[bb]
            if want != have:
                if have >= 0:
                    n0, n1 = _set_remove(have, jcls[have], items0, items1,
                                         pos, n0, n1)
                    if instrumented:
                        D -= dcontrib[have]
                        G -= gcontrib[have]
                if want >= 0:
                    n0, n1 = _set_insert(want, jcls[want], items0, items1,
                                         pos, n0, n1)
                    if instrumented:
                        D += dcontrib[want]
                        G += gcontrib[want]
                bond_active[bb] = want

        if instrumented:
            since_refresh += 1
            if since_refresh >= RECOMPUTE_EVERY:
                since_refresh = 0
                D = 0.0
                G = 0.0
                for i in range(n0):
                    D += dcontrib[items0[i]]
                    G += gcontrib[items0[i]]
                for i in range(n1):
                    D += dcontrib[items1[i]]
                    G += gcontrib[items1[i]]

    return nev, frozen_at, 0


@njit(cache=True, nogil=True)
def gillespie_final_batch(reps, occ0, jsrc, jdst, jcls, n_bonds, periodic, g,
                          inv_n2, tau_end, seed):
    """Final-state bitmask counts over independent replicas (small lattices)."""
    S = occ0.shape[0]
    J = jsrc.shape[0]
    counts = np.zeros(1 << S, dtype=np.int64)
    occ = np.empty(S, dtype=np.uint8)
    items0 = np.empty(J, dtype=np.int32)
    items1 = np.empty(J, dtype=np.int32)
    pos = np.empty(J, dtype=np.int32)
    bond_active = np.empty(n_bonds, dtype=np.int32)
    sample_tau = np.empty(1, dtype=np.float64)
    sample_tau[0] = tau_end
    out_prof = np.empty((1, S), dtype=np.uint8)
    out_scal = np.empty((1, 5), dtype=np.float64)
    wgt = np.zeros(0, dtype=np.float64)
    contrib = np.zeros(0, dtype=np.float64)
    ev_tau = np.zeros(0, dtype=np.float64)
    ev_i = np.zeros(0, dtype=np.int32)
    no_forced_t = np.zeros(0, dtype=np.float64)
    no_forced_j = np.zeros(0, dtype=np.int32)
    for r in range(reps):
        occ[:] = occ0
        rep_seed = derive_seed(seed, r)
        gillespie_run(occ, jsrc, jdst, jcls, n_bonds, periodic, g, inv_n2,
                      sample_tau, rep_seed, False, wgt, contrib, contrib,
                      -1, -1, -1, 0.0, 0.0, True, out_prof, out_scal,
                      0, ev_tau, ev_i, ev_i, no_forced_t, no_forced_j,
                      items0, items1, pos, bond_active)
        code = 0
        for i in range(S):
            code = (code << 1) | out_prof[0, i]
        counts[code] += 1
    return counts


@njit(cache=True, nogil=True)
def gillespie_chain_counts(n_steps, occ0, jsrc, jdst, jcls, g, seed):
    """Jump-chain tallies: visits per state and (state, directed jump) counts."""
    S = occ0.shape[0]
    J = jsrc.shape[0]
    visits = np.zeros(1 << S, dtype=np.int64)
    taken = np.zeros((1 << S, J), dtype=np.int64)
    occ = occ0.copy()
    state = seed
    code = 0
    for i in range(S):
        code = (code << 1) | occ[i]
    for _ in range(n_steps):
        # total rate and cumulative selection over admissible jumps
        R = 0.0
        for j in range(J):
            if occ[jsrc[j]] == 1 and occ[jdst[j]] == 0:
                R += g if jcls[j] == 1 else 1.0
        if R <= 0.0:
            break
        state, z = _sm_next(state)
        w = _u_half_open(z) * R
        acc = 0.0
        chosen = -1
        for j in range(J):
            if occ[jsrc[j]] == 1 and occ[jdst[j]] == 0:
                acc += g if jcls[j] == 1 else 1.0
                if w < acc:
                    chosen = j
                    break
        if chosen < 0:
            chosen = J - 1
        visits[code] += 1
        taken[code, chosen] += 1
        a = jsrc[chosen]
        b = jdst[chosen]
        occ[a] = 0
        occ[b] = 1
        code = code - (1 << (S - 1 - a)) + (1 << (S - 1 - b))
    return visits, taken


# ---------------------------------------------------------------------------
# Poisson-clock (graphical) engine
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _heap_less(t1, c1, t2, c2):
    if t1 != t2:
        return t1 < t2
    return c1 < c2


@njit(cache=True, nogil=True)
def _sift_down(ht, hc, n, i):
    while True:
        l = 2 * i + 1
        if l >= n:
            return
        r = l + 1
        m = l
        if r < n and _heap_less(ht[r], hc[r], ht[l], hc[l]):
            m = r
        if _heap_less(ht[m], hc[m], ht[i], hc[i]):
            ht[i], ht[m] = ht[m], ht[i]
            hc[i], hc[m] = hc[m], hc[i]
            i = m
        else:
            return


@njit(cache=True, nogil=True)
def _heapify(ht, hc, n):
    for i in range(n // 2 - 1, -1, -1):
        _sift_down(ht, hc, n, i)


@njit(cache=True, nogil=True)
def init_clocks(seed, rate_j, clock_state, clock_next):
    """Seed one splitmix stream per directed-jump clock; draw first arrivals."""
    J = rate_j.shape[0]
    for j in range(J):
        s = derive_seed(seed, j)
        s, z = _sm_next(s)
        clock_state[j] = s
        clock_next[j] = -math.log(_u_open(z)) / rate_j[j]


@njit(cache=True, nogil=True)
def graphical_run(occ, jsrc, jdst, rate_j, clock_state, clock_next, t_until,
                  sample_tau, record_prof, out_prof, ht, hc):
    """Process clock rings up to t_until, recording at sample times."""
    J = rate_j.shape[0]
    K = sample_tau.shape[0]
    for j in range(J):
        ht[j] = clock_next[j]
        hc[j] = j
    _heapify(ht, hc, J)
    k = 0
    while True:
        tmin = ht[0]
        while k < K and sample_tau[k] <= t_until and sample_tau[k] <= tmin:
            if record_prof:
                for i in range(occ.shape[0]):
                    out_prof[k, i] = occ[i]
            k += 1
        if tmin > t_until:
            break
        j = hc[0]
        if occ[jsrc[j]] == 1 and occ[jdst[j]] == 0:
            occ[jsrc[j]] = 0
            occ[jdst[j]] = 1
        s = clock_state[j]
        s, z = _sm_next(s)
        clock_state[j] = s
        clock_next[j] = tmin - math.log(_u_open(z)) / rate_j[j]
        ht[0] = clock_next[j]
        _sift_down(ht, hc, J, 0)
    return k


@njit(cache=True, nogil=True)
def coupled_run(occ_lo, occ_hi, jsrc, jdst, rate_j, clock_state, clock_next,
                t_until, sample_tau, ht, hc):
    """Evolve two configurations by the same clocks; count order violations.

    At every sample time (and at t_until) checks occ_lo <= occ_hi sitewise.
    """
    J = rate_j.shape[0]
    K = sample_tau.shape[0]
    S = occ_lo.shape[0]
    for j in range(J):
        ht[j] = clock_next[j]
        hc[j] = j
    _heapify(ht, hc, J)
    violations = 0
    k = 0
    while True:
        tmin = ht[0]
        while k < K and sample_tau[k] <= t_until and sample_tau[k] <= tmin:
            for i in range(S):
                if occ_lo[i] > occ_hi[i]:
                    violations += 1
                    break
            k += 1
        if tmin > t_until:
            break
        j = hc[0]
        if occ_lo[jsrc[j]] == 1 and occ_lo[jdst[j]] == 0:
            occ_lo[jsrc[j]] = 0
            occ_lo[jdst[j]] = 1
        if occ_hi[jsrc[j]] == 1 and occ_hi[jdst[j]] == 0:
            occ_hi[jsrc[j]] = 0
            occ_hi[jdst[j]] = 1
        s = clock_state[j]
        s, z = _sm_next(s)
        clock_state[j] = s
        clock_next[j] = tmin - math.log(_u_open(z)) / rate_j[j]
        ht[0] = clock_next[j]
        _sift_down(ht, hc, J, 0)
    return violations


@njit(cache=True, nogil=True)
def graphical_final_batch(reps, occ0, jsrc, jdst, rate_j, tau_end, seed):
    """Final-state bitmask counts under the clock engine (small lattices)."""
    S = occ0.shape[0]
    J = rate_j.shape[0]
    counts = np.zeros(1 << S, dtype=np.int64)
    occ = np.empty(S, dtype=np.uint8)
    clock_state = np.empty(J, dtype=np.uint64)
    clock_next = np.empty(J, dtype=np.float64)
    ht = np.empty(J, dtype=np.float64)
    hc = np.empty(J, dtype=np.int64)
    sample_tau = np.zeros(0, dtype=np.float64)
    out_prof = np.zeros((0, 0), dtype=np.uint8)
    for r in range(reps):
        occ[:] = occ0
        init_clocks(derive_seed(seed, r), rate_j, clock_state, clock_next)
        graphical_run(occ, jsrc, jdst, rate_j, clock_state, clock_next,
                      tau_end, sample_tau, False, out_prof, ht, hc)
        code = 0
        for i in range(S):
            code = (code << 1) | occ[i]
        counts[code] += 1
    return counts


@njit(cache=True, nogil=True)
def coupled_order_batch(reps, n_sites, jsrc, jdst, rate_j, tau_end,
                        sample_tau, p_lower, p_extra, seed):
    """Random ordered pairs evolved by shared clocks; total order violations."""
    J = rate_j.shape[0]
    occ_lo = np.empty(n_sites, dtype=np.uint8)
    occ_hi = np.empty(n_sites, dtype=np.uint8)
    clock_state = np.empty(J, dtype=np.uint64)
    clock_next = np.empty(J, dtype=np.float64)
    ht = np.empty(J, dtype=np.float64)
    hc = np.empty(J, dtype=np.int64)
    violations = 0
    for r in range(reps):
        state = derive_seed(seed, 2 * r + 1)
        for i in range(n_sites):
            state, z = _sm_next(state)
            lo = 1 if _u_half_open(z) < p_lower else 0
            state, z = _sm_next(state)
            hi = lo
            if _u_half_open(z) < p_extra:
                hi = 1
            occ_lo[i] = lo
            occ_hi[i] = hi
        init_clocks(derive_seed(seed, 2 * r), rate_j, clock_state, clock_next)
        violations += coupled_run(occ_lo, occ_hi, jsrc, jdst, rate_j,
                                  clock_state, clock_next, tau_end,
                                  sample_tau, ht, hc)
    return violations
