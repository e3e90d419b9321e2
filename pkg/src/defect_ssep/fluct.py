"""Test-function spaces and Ornstein-Uhlenbeck reference quantities.

Numerical representatives of the function classes the fluctuation theory
quantifies over: rapidly decaying smooth functions on the line, their
"Neumann" variant (two independent half-lines, all odd one-sided
derivatives vanishing at 0, continuity from the right), twice continuously
differentiable functions on the torus and on the cut interval, and the
Robin-admissible class whose one-sided derivatives at the interface equal
c times the jump.

Derivatives are analytic per family (never finite differences, which are
kept only as cross-checks), heat semigroups are evaluated by Gauss-Hermite
quadrature with even/odd reflection implementing the half-line images, and
norms use adaptive Gauss-Kronrod integration split at the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import quad

from .errors import DomainError, TestFunctionClassError

SCHWARTZ = "schwartz"
SCHWARTZ_NEUMANN = "schwartz-neumann"
TORUS_C2 = "torus-c2"
INTERVAL_C2 = "interval-c2"
ROBIN_ADMISSIBLE = "robin"

LINE_REGIME = "line"
NEUMANN_REGIME = "line-neumann"

MEMBERSHIP_TOL = 1e-8
_GH_NODES = 96


@dataclass(frozen=True)
class TestFunction:
    """Evaluator bundle for one test function.

    `derivs` holds vectorized callables for derivative orders 0..K
    (analytic); `boundary` maps (order, side) to the one-sided limit at the
    interface, where side +1 is u -> 0+ and side -1 is u -> 0- (on the
    torus, u -> 1-).  `support` bounds the numerically relevant |u| for
    line-domain functions.
    """

    name: str
    klass: str
    domain: str
    derivs: tuple
    support: float
    boundary: dict = field(default_factory=dict)
    coefficient: float | None = None

    def __call__(self, u):
        return self.derivs[0](np.asarray(u, dtype=np.float64))

    def deriv(self, order: int):
        if order < len(self.derivs):
            return self.derivs[order]
        base = self.derivs[-1]
        extra = order - (len(self.derivs) - 1)

        def fd(u, base=base, extra=extra):
            h = 1e-4
            v = np.asarray(u, dtype=np.float64)
            out = np.asarray(base(v), dtype=np.float64)
            for _ in range(extra):
                out = (np.asarray(base(v + h)) - np.asarray(base(v - h))) \
                    / (2 * h)
            return out

        return fd

    def d1(self, u):
        return self.deriv(1)(np.asarray(u, dtype=np.float64))

    def d2(self, u):
        return self.deriv(2)(np.asarray(u, dtype=np.float64))

    def one_sided(self, order: int, side: int) -> float:
        key = (order, 1 if side > 0 else -1)
        if key in self.boundary:
            return self.boundary[key]
        # fallback: one-sided Richardson from just inside the domain
        eps = 1e-5
        if self.domain == "torus":
            u0 = 0.0 if side > 0 else 1.0
            pts = u0 + (eps if side > 0 else -eps) * np.array([1.0, 2.0])
        else:
            pts = (eps if side > 0 else -eps) * np.array([1.0, 2.0])
        f = self.deriv(order)
        v1, v2 = float(f(pts[:1]).item()), float(f(pts[1:]).item())
        return 2.0 * v1 - v2


# -- analytic families -------------------------------------------------------

def _polyexp_derivs(coeffs, a, b, orders=5):
    """Derivatives of P(u) * exp(-a (u - b)^2) as analytic closures."""
    polys = [np.asarray(coeffs, dtype=np.float64)]
    # d/du [P e^w] = (P' + w' P) e^w with w' = -2a(u - b)
    wprime = np.array([2.0 * a * b, -2.0 * a])
    for _ in range(orders - 1):
        P = polys[-1]
        polys.append(npoly.polyadd(npoly.polyder(P),
                                   npoly.polymul(wprime, P)))

    def make(P):
        def f(u, P=P):
            u = np.asarray(u, dtype=np.float64)
            return npoly.polyval(u, P) * np.exp(-a * (u - b) ** 2)
        return f

    return tuple(make(P) for P in polys)


def _flat_derivs(s, w_minus, w_plus, orders=5):
    """Derivatives of the flat-at-origin bump w * exp(2 - (u/s)^2 - (s/u)^2).

    All derivatives vanish at u = 0; the side weights may differ (the two
    half-lines are independent).  Values with |u| < s/20 are exactly zero
    (the true magnitude there is below 1e-170).
    """
    s2 = s * s

    def parts(u):
        q = -2.0 * u / s2 + 2.0 * s2 / u ** 3
        q1 = -2.0 / s2 - 6.0 * s2 / u ** 4
        q2 = 24.0 * s2 / u ** 5
        q3 = -120.0 * s2 / u ** 6
        return q, q1, q2, q3

    def factor(order, u):
        q, q1, q2, q3 = parts(u)
        if order == 0:
            return np.ones_like(u)
        if order == 1:
            return q
        if order == 2:
            return q * q + q1
        if order == 3:
            return q ** 3 + 3.0 * q * q1 + q2
        return q ** 4 + 6.0 * q * q * q1 + 3.0 * q1 * q1 + 4.0 * q * q2 + q3

    def make(order):
        def f(u, order=order):
            u = np.asarray(u, dtype=np.float64)
            out = np.zeros_like(u)
            live = np.abs(u) >= s / 20.0
            ul = u[live]
            phi = np.exp(2.0 - (ul / s) ** 2 - (s / ul) ** 2)
            w = np.where(ul > 0, w_plus, w_minus)
            out[live] = w * phi * factor(order, ul)
            return out
        return f

    return tuple(make(k) for k in range(orders))


def _harmonic_derivs(terms, orders=5):
    """Derivatives of sum_i a_i cos(w_i u + phi_i)."""
    def make(order):
        def f(u, order=order):
            u = np.asarray(u, dtype=np.float64)
            out = np.zeros_like(u)
            for amp, w, phase in terms:
                out = out + amp * w ** order * np.cos(
                    w * u + phase + order * math.pi / 2.0)
            return out
        return f

    return tuple(make(k) for k in range(orders))


def _poly_derivs(coeffs, orders=5):
    polys = [np.asarray(coeffs, dtype=np.float64)]
    for _ in range(orders - 1):
        polys.append(npoly.polyder(polys[-1]))

    def make(P):
        def f(u, P=P):
            return npoly.polyval(np.asarray(u, dtype=np.float64), P)
        return f

    return tuple(make(P) for P in polys)


def _sum_derivs(da, db):
    out = []
    for fa, fb in zip(da, db):
        def f(u, fa=fa, fb=fb):
            return np.asarray(fa(u)) + np.asarray(fb(u))
        out.append(f)
    return tuple(out)


def _boundary_from_derivs(derivs, domain, orders=5):
    b = {}
    for k in range(orders):
        fn = derivs[k]
        if domain == "torus":
            b[(k, 1)] = float(np.asarray(fn(np.array([0.0]))).item())
            b[(k, -1)] = float(np.asarray(fn(np.array([1.0]))).item())
        else:
            v = float(np.asarray(fn(np.array([0.0]))).item())
            b[(k, 1)] = v
            b[(k, -1)] = v
    return b


def _numeric_support(derivs, start: float) -> float:
    u = np.linspace(0.0, start + 4.0, 2048)
    mags = np.zeros_like(u)
    for fn in derivs[:3]:
        vals = np.abs(np.asarray(fn(u))) + np.abs(np.asarray(fn(-u)))
        mags = np.maximum(mags, vals / max(vals.max(), 1e-300))
    beyond = np.nonzero(mags > 1e-16)[0]
    return float(u[beyond[-1]] + 0.25) if beyond.size else 1.0


def gaussian(width: float = 1.0, center: float = 0.0, poly=(1.0,),
             name: str | None = None) -> TestFunction:
    """P(u) exp(-((u - center)/width)^2), a rapidly decaying line function."""
    a = 1.0 / width ** 2
    derivs = _polyexp_derivs(poly, a, center)
    b = _boundary_from_derivs(derivs, "line")
    support = _numeric_support(derivs, abs(center) + 7.0 * width)
    return TestFunction(name or f"gauss(w={width},c={center})", SCHWARTZ,
                        "line", derivs, support, b)


def flat_bump(scale: float = 1.0, w_minus: float = 1.0, w_plus: float = 1.0,
              name: str | None = None) -> TestFunction:
    """Two-sided bump vanishing to all orders at 0; independent side weights."""
    derivs = _flat_derivs(scale, w_minus, w_plus)
    b = {(k, s): 0.0 for k in range(5) for s in (1, -1)}
    support = _numeric_support(derivs, 8.0 * scale)
    return TestFunction(name or f"flat(s={scale},{w_minus},{w_plus})",
                        SCHWARTZ_NEUMANN, "line", derivs, support, b)


def catalog(klass: str, alpha: float | None = None,
            k: int | None = None) -> list[TestFunction]:
    """At least five members per function class."""
    if klass == SCHWARTZ:
        return [
            gaussian(1.0, name="gauss"),
            gaussian(1.0, poly=(0.0, 1.0), name="odd-gauss"),
            gaussian(1.0, poly=(-1.0, 0.0, 1.0), name="hermite2"),
            gaussian(1.5, name="wide-gauss"),
            gaussian(1.0, center=0.5, name="shifted-gauss"),
            gaussian(0.8, poly=(1.0, 0.0, -0.5, 0.0, 0.05),
                     name="quartic-gauss"),
        ]
    if klass == SCHWARTZ_NEUMANN:
        return [
            flat_bump(1.0, 1.0, 1.0, name="flat-even"),
            flat_bump(1.0, 0.0, 1.0, name="flat-right"),
            flat_bump(1.0, 1.0, 0.0, name="flat-left"),
            flat_bump(0.8, 1.0, 2.0, name="flat-lopsided"),
            flat_bump(1.3, 2.0, 0.5, name="flat-wide"),
            flat_bump(1.0, -0.5, 1.0, name="flat-signed"),
        ]
    if klass == TORUS_C2:
        two_pi = 2.0 * math.pi
        specs = [
            ("one", [(1.0, 0.0, 0.0)]),
            ("cos1", [(1.0, two_pi, 0.0)]),
            ("sin1", [(1.0, two_pi, -math.pi / 2.0)]),
            ("cos2", [(1.0, 2.0 * two_pi, 0.0)]),
            ("mix", [(1.0, two_pi, 0.0), (0.5, 2.0 * two_pi, -math.pi / 2.0)]),
        ]
        out = []
        for nm, terms in specs:
            derivs = _harmonic_derivs(terms)
            out.append(TestFunction(nm, TORUS_C2, "torus", derivs, 1.0,
                                    _boundary_from_derivs(derivs, "torus")))
        return out
    if klass == INTERVAL_C2:
        pi = math.pi
        specs = [
            ("coshalf", _harmonic_derivs([(1.0, pi, 0.0)])),
            ("downramp", _poly_derivs([1.0, -1.0])),
            ("quartic", _poly_derivs([0.0, 0.0, 1.0, -2.0, 1.0])),
            ("cubic", _poly_derivs([0.2, 0.0, -1.0, 1.0])),
            ("coshalf-mix", _sum_derivs(_harmonic_derivs([(1.0, pi, 0.0)]),
                                        _harmonic_derivs([(0.3, 2 * pi, 0.0)]))),
        ]
        return [TestFunction(nm, INTERVAL_C2, "torus", derivs, 1.0,
                             _boundary_from_derivs(derivs, "torus"))
                for nm, derivs in specs]
    if klass == ROBIN_ADMISSIBLE:
        if alpha is None or k is None:
            raise DomainError("the Robin class needs alpha and k")
        c = alpha / k
        pi = math.pi
        bases = [
            ("rob-cos1", [(1.0, pi, 0.0)]),
            ("rob-cos2", [(1.0, 2.0 * pi, 0.0)]),
            ("rob-mix", [(1.0, pi, 0.0), (0.3, 3.0 * pi, 0.0)]),
            ("rob-low", [(0.5, pi, 0.0), (-0.2, 2.0 * pi, 0.0)]),
            ("rob-flat", [(0.0, pi, 0.0)]),
        ]
        out = []
        for nm, terms in bases:
            phi = _harmonic_derivs(terms)
            phi0 = float(np.asarray(phi[0](np.array([0.0]))).item())
            phi1 = float(np.asarray(phi[0](np.array([1.0]))).item())
            slope = c * (phi0 - phi1) / (1.0 + c)
            linear = _poly_derivs([0.5, slope])
            derivs = _sum_derivs(linear, phi)
            tf = TestFunction(nm, ROBIN_ADMISSIBLE, "torus", derivs, 1.0,
                              _boundary_from_derivs(derivs, "torus"),
                              coefficient=c)
            out.append(tf)
        return out
    raise DomainError(f"unknown class {klass!r}")


# -- class membership --------------------------------------------------------

def class_membership(H: TestFunction, klass: str, tol: float = MEMBERSHIP_TOL,
                     coefficient: float | None = None) -> bool:
    """Numerically verify the class's defining interface conditions."""
    if klass == SCHWARTZ:
        if H.domain != "line":
            return False
        for order in range(3):
            if abs(H.one_sided(order, 1) - H.one_sided(order, -1)) > tol:
                return False
        return True
    if klass == SCHWARTZ_NEUMANN:
        if H.domain != "line":
            return False
        # continuity from the right at zero
        v0 = float(np.asarray(H(np.array([0.0]))).item())
        if abs(v0 - H.one_sided(0, 1)) > tol:
            return False
        for order in (1, 3):
            for side in (1, -1):
                if abs(H.one_sided(order, side)) > tol:
                    return False
        return True
    if klass == TORUS_C2:
        for order in range(3):
            if abs(H.one_sided(order, 1) - H.one_sided(order, -1)) > 100 * tol:
                return False
        return True
    if klass == INTERVAL_C2:
        return H.domain == "torus"
    if klass == ROBIN_ADMISSIBLE:
        c = coefficient if coefficient is not None else H.coefficient
        if c is None:
            raise DomainError("need the Robin coefficient")
        jump = H.one_sided(0, 1) - H.one_sided(0, -1)
        return (abs(H.one_sided(1, 1) - c * jump) <= tol
                and abs(H.one_sided(1, -1) - c * jump) <= tol)
    raise DomainError(f"unknown class {klass!r}")


def verify_membership(H: TestFunction, klass: str, **kw):
    if not class_membership(H, klass, **kw):
        raise TestFunctionClassError(f"{H.name} is not in class {klass}")


def seminorms(H: TestFunction, k_max: int = 4, l_max: int = 4) -> dict:
    """Decay certificate: sup (1 + |u|^l) |d^k H| over a dense grid."""
    u = np.linspace(-H.support - 2.0, H.support + 2.0, 4001)
    u = u[np.abs(u) > 1e-9]
    out = {}
    for k in range(k_max + 1):
        vals = np.abs(np.asarray(H.deriv(k)(u)))
        for l in range(l_max + 1):
            out[(k, l)] = float(((1.0 + np.abs(u) ** l) * vals).max())
    return out


def neumann_gradient(H: TestFunction) -> TestFunction:
    """First derivative, valued by its right limit at the interface."""
    derivs = H.derivs[1:]
    if len(derivs) < 3:
        raise DomainError("need analytic derivatives to order 3")
    b = {(k, s): H.boundary[(k + 1, s)] for k in range(len(H.derivs) - 1)
         for s in (1, -1) if (k + 1, s) in H.boundary}
    return TestFunction("grad:" + H.name, H.klass, H.domain, derivs,
                        H.support, b, H.coefficient)


def neumann_laplacian(H: TestFunction) -> TestFunction:
    """Second derivative, valued by its right limit at the interface."""
    derivs = H.derivs[2:]
    if len(derivs) < 3:
        raise DomainError("need analytic derivatives to order 4")
    b = {(k, s): H.boundary[(k + 2, s)] for k in range(len(H.derivs) - 2)
         for s in (1, -1) if (k + 2, s) in H.boundary}
    return TestFunction("lap:" + H.name, H.klass, H.domain, derivs,
                        H.support, b, H.coefficient)


# -- lattice-level constructions --------------------------------------------

class LatticeFunction:
    """Discrete test vector indexed by lattice sites (values at x/n)."""

    def __init__(self, name, lattice, n, values):
        self.name = name
        self.lattice = lattice
        self.n = n
        self.values = np.asarray(values, dtype=np.float64)
        self.domain = "torus" if lattice.geometry == "torus" else "line"

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        idx = np.rint(u * self.n).astype(int)
        flat = [self.values[self.lattice.index(int(x))] for x in
                np.atleast_1d(idx)]
        out = np.asarray(flat, dtype=np.float64)
        return out.reshape(np.shape(u)) if np.shape(u) else out[0]


def slow_bond_interpolation(H: TestFunction, lattice, n: int,
                            k: int) -> LatticeFunction:
    """Discrete test vector equal to H away from the slow bonds and, on the
    sites 0..k they span, the linear interpolation between the two
    one-sided interface values of H."""
    sites = lattice.sites()
    u = sites.astype(np.float64) / n
    vals = np.asarray(H(np.mod(u, 1.0)), dtype=np.float64)
    h_plus = H.one_sided(0, 1)
    h_minus = H.one_sided(0, -1)
    for x in range(0, k + 1):
        vals[lattice.index(x)] = h_minus + (x / k) * (h_plus - h_minus)
    return LatticeFunction(f"interp[{H.name},k={k}]", lattice, n, vals)


def interpolated_at_origin(H: TestFunction, n: int):
    """Line test function with the origin value replaced by the average of
    its two lattice neighbors, which cancels the second-difference terms at
    the defect in the fluctuation decomposition."""
    val0 = 0.5 * (float(np.asarray(H(np.array([1.0 / n]))).item())
                  + float(np.asarray(H(np.array([-1.0 / n]))).item()))

    class _Interp:
        name = f"origin-interp[{H.name}]"
        domain = "line"

        def __call__(self, u):
            u = np.asarray(u, dtype=np.float64)
            return np.where(u == 0.0, val0, np.asarray(H(u)))

    return _Interp()


# -- quadrature and norms ----------------------------------------------------

def integrate_line(fn, support: float, tol: float = 1e-9) -> float:
    """Adaptive Gauss-Kronrod integral over [-L, L] split at the origin."""
    left, _ = quad(lambda u: float(np.asarray(fn(np.array([u]))).item()),
                   -support, 0.0, epsabs=tol, limit=200)
    right, _ = quad(lambda u: float(np.asarray(fn(np.array([u]))).item()),
                    0.0, support, epsabs=tol, limit=200)
    return left + right


def norm_l2_sq(H, support: float | None = None) -> float:
    """int H(u)^2 du over the line."""
    L = support if support is not None else H.support
    return integrate_line(lambda u: np.asarray(H(u)) ** 2, L)


def gradient_norm_sq(H: TestFunction, support: float | None = None) -> float:
    """int (dH)^2 du over the line (one-sided at 0, which is a null set)."""
    L = support if support is not None else H.support
    return integrate_line(lambda u: np.asarray(H.d1(u)) ** 2, L)


def limit_quadratic_variation(regime: str, H: TestFunction, p: float,
                              t: float) -> float:
    """Limiting martingale quadratic variation 2 t chi(p) ||grad H||^2."""
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie strictly between 0 and 1")
    if regime not in (LINE_REGIME, NEUMANN_REGIME):
        raise DomainError(f"unknown regime {regime!r}")
    chi = p * (1.0 - p)
    return 2.0 * t * chi * gradient_norm_sq(H)


# -- heat semigroups ---------------------------------------------------------

@lru_cache(maxsize=4)
def _gh_nodes(n=_GH_NODES):
    z, w = np.polynomial.hermite.hermgauss(n)
    return z, w / math.sqrt(math.pi)


def _gh_apply(data, u, t):
    """(1/sqrt(pi)) int exp(-z^2) data(u + 2 sqrt(t) z) dz, vectorized in u."""
    z, w = _gh_nodes()
    pts = u[:, None] + 2.0 * math.sqrt(t) * z[None, :]
    return np.asarray(data(pts.ravel())).reshape(pts.shape) @ w


def _reflect_even(fn):
    return lambda w: np.asarray(fn(np.abs(w)))


def _reflect_odd(fn):
    return lambda w: np.sign(w) * np.asarray(fn(np.abs(w)))


def _heat_kernel(u, t):
    return np.exp(-u * u / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)


def semigroup(regime: str, H: TestFunction, t: float) -> TestFunction:
    """Heat semigroup at time t applied to H.

    `line`: Gaussian-kernel smoothing on the whole line.  `line-neumann`:
    each half-line evolves independently with a no-flux condition at 0,
    realized by the method of images (even reflection of the side's data).
    """
    if t < 0.0:
        raise DomainError("the semigroup needs t >= 0")
    if regime not in (LINE_REGIME, NEUMANN_REGIME):
        raise DomainError(f"unknown regime {regime!r}")
    if H.domain != "line":
        raise DomainError("semigroups act on line-domain functions")
    if t == 0.0:
        return H
    support = H.support + 8.0 * math.sqrt(2.0 * t) + 0.5

    if regime == LINE_REGIME:
        def val(u):
            u = np.atleast_1d(np.asarray(u, dtype=np.float64))
            return _gh_apply(H.derivs[0], u, t)

        def d1(u):
            u = np.atleast_1d(np.asarray(u, dtype=np.float64))
            return _gh_apply(H.derivs[1], u, t)

        def d2(u):
            u = np.atleast_1d(np.asarray(u, dtype=np.float64))
            return _gh_apply(H.derivs[2], u, t)

        derivs = (val, d1, d2)
        b = {}
        for k, fn in enumerate(derivs):
            v = float(fn(np.array([0.0])).item())
            b[(k, 1)] = v
            b[(k, -1)] = v
        return TestFunction(f"T[{t}]" + H.name, H.klass, "line", derivs,
                            support, b)

    # two independent half-lines; data reflected evenly side by side
    right = {0: H.derivs[0], 1: H.derivs[1], 2: H.derivs[2]}
    left = {k: (lambda fn: (lambda w: np.asarray(fn(-np.abs(w)))))(
        H.derivs[k]) for k in range(3)}
    d1p = H.one_sided(1, 1)
    d1m = H.one_sided(1, -1)

    def val(u):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        out = np.empty_like(u)
        pos = u >= 0.0
        if pos.any():
            out[pos] = _gh_apply(_reflect_even(right[0]), u[pos], t)
        if (~pos).any():
            um = u[~pos]
            out[~pos] = _gh_apply(_reflect_even(lambda w: left[0](w)),
                                  -um, t)
        return out

    def d1(u):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        out = np.empty_like(u)
        pos = u >= 0.0
        if pos.any():
            out[pos] = _gh_apply(_reflect_odd(right[1]), u[pos], t)
        if (~pos).any():
            um = u[~pos]
            out[~pos] = -_gh_apply(_reflect_odd(lambda w: left[1](w)),
                                   -um, t)
        return out

    def d2(u):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        out = np.empty_like(u)
        pos = u >= 0.0
        if pos.any():
            up = u[pos]
            out[pos] = _gh_apply(_reflect_even(right[2]), up, t) \
                + 2.0 * _heat_kernel(up, t) * d1p
        if (~pos).any():
            um = u[~pos]
            out[~pos] = _gh_apply(_reflect_even(lambda w: left[2](w)),
                                  -um, t) - 2.0 * _heat_kernel(um, t) * d1m
        return out

    derivs = (val, d1, d2)
    b = {(1, 1): 0.0, (1, -1): 0.0, (3, 1): 0.0, (3, -1): 0.0}
    b[(0, 1)] = float(val(np.array([0.0])).item())
    b[(0, -1)] = float(_gh_apply(_reflect_even(left[0]),
                                 np.array([0.0]), t).item())
    b[(2, 1)] = float(d2(np.array([0.0])).item())
    b[(2, -1)] = float((_gh_apply(_reflect_even(left[2]), np.array([0.0]), t)
                        - 2.0 * _heat_kernel(np.array([0.0]), t) * d1m).item())
    return TestFunction(f"TN[{t}]" + H.name, H.klass, "line", derivs,
                        support, b)


def _grid_panels(L: float, panel: float = 0.25, nodes: int = 12):
    z, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, L, max(2, int(math.ceil(L / panel)) + 1))
    us = []
    ws = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        us.append(mid + half * z)
        ws.append(half * w)
    u = np.concatenate(us)
    w = np.concatenate(ws)
    return u, w


def _grad_semigroup_norm_sq(regime: str, H: TestFunction, r: float) -> float:
    """||grad T_r H||^2 by fixed-panel quadrature (both half-lines)."""
    L = H.support + 8.0 * math.sqrt(2.0 * max(r, 1e-12)) + 0.5
    u, w = _grid_panels(L)
    if r == 0.0:
        gp = np.asarray(H.d1(u))
        gm = np.asarray(H.d1(-u))
        return float(w @ (gp * gp) + w @ (gm * gm))
    if regime == LINE_REGIME:
        gp = _gh_apply(H.derivs[1], u, r)
        gm = _gh_apply(H.derivs[1], -u, r)
    else:
        right = H.derivs[1]
        left = lambda v: np.asarray(H.derivs[1](-np.abs(v)))
        gp = _gh_apply(_reflect_odd(right), u, r)
        gm = -_gh_apply(_reflect_odd(left), u, r)
    return float(w @ (gp * gp) + w @ (gm * gm))


def ou_conditional_stats(regime: str, H: TestFunction, s: float, t: float):
    """Conditional law of the limiting field paired with H.

    Returns (T_{t-s} H, integral over r in [0, t-s] of ||grad T_r H||^2),
    the mean operator and variance of the Gaussian conditional
    distribution.
    """
    if not 0.0 <= s < t:
        raise DomainError("need 0 <= s < t")
    tau = t - s
    mean_fn = semigroup(regime, H, tau)
    z, w = np.polynomial.legendre.leggauss(32)
    r = 0.5 * tau * (z + 1.0)
    wr = 0.5 * tau * w
    vals = np.array([_grad_semigroup_norm_sq(regime, H, ri) for ri in r])
    return mean_fn, float(wr @ vals)


def ou_variance_by_energy(regime: str, H: TestFunction, tau: float) -> float:
    """Same variance through the energy identity (||H||^2 - ||T_tau H||^2)/2."""
    h2 = norm_l2_sq(H)
    th = semigroup(regime, H, tau)
    th2 = norm_l2_sq(th, support=th.support)
    return 0.5 * (h2 - th2)
