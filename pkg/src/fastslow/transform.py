"""Change of variables ``h = 1 / r'`` and the drifts it induces.

For a multiplier ``h`` with ``h(xi) != 0`` the map ``r(x) = int_xi^x dy / h(y)``
turns ``dX = sigma h(X) o dW + F(X) dt`` into the additive equation
``dZ = sigma dW + Ft(Z) dt`` with ``Ft = (F / h) o r^-1``.  Closed forms are
used for constant, power and linear multipliers; anything else goes through
adaptive quadrature and a safeguarded Newton inverse.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numba as nb
import numpy as np
from scipy import integrate, optimize

from .errors import DomainError
from .functions import Multiplier, ScalarFn, custom_h, jit_scalar, scalar_fn

NUMERIC_QUAD_TOL = 1e-10
NUMERIC_ROOT_TOL = 1e-12


@dataclass(frozen=True)
class TransformSpec:
    """``r`` and friends on an open ``domain``; ``image = r(domain)`` is ordered."""

    kind: str
    xi: float
    h: Multiplier
    r: ScalarFn
    r_inverse: ScalarFn
    r_prime: ScalarFn
    r_double_prime: ScalarFn
    domain: tuple[float, float]
    image: tuple[float, float]
    increasing: bool = True
    warnings: tuple[str, ...] = field(default=())

    @property
    def has_kernels(self) -> bool:
        return self.r.kernel is not None and self.r_inverse.kernel is not None

    def in_domain(self, x: float) -> bool:
        return self.domain[0] < x < self.domain[1]

    def in_image(self, z: float) -> bool:
        return self.image[0] < z < self.image[1]

    def forward(self, x: float) -> float:
        if not self.in_domain(x):
            raise DomainError(f"{x!r} lies outside the transform domain {self.domain}", x)
        return self.r(x)

    def inverse(self, z: float) -> float:
        if not self.in_image(z):
            raise DomainError(f"{z!r} lies outside r(domain) = {self.image}", z)
        return self.r_inverse(z)


# --- closed forms --------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _constant_kernels(c: float, xi: float):
    @nb.njit(nogil=True)
    def r(x):
        return (x - xi) / c

    @nb.njit(nogil=True)
    def rinv(z):
        return xi + c * z

    @nb.njit(nogil=True)
    def rp(x):
        return 1.0 / c

    @nb.njit(nogil=True)
    def rpp(x):
        return 0.0

    return r, rinv, rp, rpp


@functools.lru_cache(maxsize=None)
def _sqrt_kernels(xi: float):
    s = math.sqrt(xi)

    @nb.njit(nogil=True)
    def r(x):
        return 2.0 * (math.sqrt(x) - s)

    @nb.njit(nogil=True)
    def rinv(z):
        u = 0.5 * z + s
        return u * u

    @nb.njit(nogil=True)
    def rp(x):
        return 1.0 / math.sqrt(x)

    @nb.njit(nogil=True)
    def rpp(x):
        return -0.5 / (x * math.sqrt(x))

    return r, rinv, rp, rpp


@functools.lru_cache(maxsize=None)
def _power_kernels(p: float, xi: float):
    q = 1.0 - p
    anchor = xi**q
    inv_q = 1.0 / q

    @nb.njit(nogil=True)
    def r(x):
        return (x**q - anchor) / q

    @nb.njit(nogil=True)
    def rinv(z):
        return (q * z + anchor) ** inv_q

    @nb.njit(nogil=True)
    def rp(x):
        return x ** (-p)

    @nb.njit(nogil=True)
    def rpp(x):
        return -p * x ** (-p - 1.0)

    return r, rinv, rp, rpp


@functools.lru_cache(maxsize=None)
def _linear_kernels(a: float, b: float, xi: float):
    h0 = a * xi + b

    @nb.njit(nogil=True)
    def r(x):
        return math.log((a * x + b) / h0) / a

    @nb.njit(nogil=True)
    def rinv(z):
        return (h0 * math.exp(a * z) - b) / a

    @nb.njit(nogil=True)
    def rp(x):
        return 1.0 / (a * x + b)

    @nb.njit(nogil=True)
    def rpp(x):
        u = a * x + b
        return -a / (u * u)

    return r, rinv, rp, rpp


def _analytic(h: Multiplier, xi: float) -> TransformSpec | None:
    if h.kind == "constant":
        c = float(h.params[0])
        kern = _constant_kernels(c, xi)
        domain = (-math.inf, math.inf)
        image = (-math.inf, math.inf)
        increasing = c > 0
    elif h.kind == "power":
        p = float(h.params[0])
        if xi <= 0.0:
            return None
        if p == 1.0:
            kern = _linear_kernels(1.0, 0.0, xi)
            image = (-math.inf, math.inf)
        elif p == 0.5:
            kern = _sqrt_kernels(xi)
            image = (-2.0 * math.sqrt(xi), math.inf)
        else:
            kern = _power_kernels(p, xi)
            edge = xi ** (1.0 - p) / (p - 1.0)
            image = (edge, math.inf) if p < 1.0 else (-math.inf, edge)
        domain = (0.0, math.inf)
        increasing = True
    elif h.kind == "linear":
        a, b = (float(v) for v in h.params)
        root = -b / a
        domain = (root, math.inf) if xi > root else (-math.inf, root)
        kern = _linear_kernels(a, b, xi)
        image = (-math.inf, math.inf)
        increasing = (a * xi + b) > 0
    else:
        return None
    r, rinv, rp, rpp = kern
    return TransformSpec(
        "analytic", xi, h,
        scalar_fn(r, "r"), scalar_fn(rinv, "r^-1"), scalar_fn(rp, "r'"), scalar_fn(rpp, "r''"),
        domain, image, increasing,
    )


# --- numeric construction ------------------------------------------------------------


def _sign_constant_domain(hfun: Callable, xi: float, lo: float, hi: float, points: int = 2001) -> tuple[float, float, list[str]]:
    """Largest interval around ``xi`` inside ``(lo, hi)`` on which ``h`` keeps its sign."""
    notes = []
    grid = np.linspace(lo, hi, points)
    vals = np.array([hfun(float(x)) for x in grid])
    s0 = math.copysign(1.0, hfun(xi))
    left, right = lo, hi
    below = np.nonzero((grid < xi) & (np.sign(vals) != s0))[0]
    above = np.nonzero((grid > xi) & (np.sign(vals) != s0))[0]
    if len(below):
        j = below[-1]
        a = grid[j]
        b = min(grid[j + 1], xi)
        left = float(optimize.brentq(hfun, a, b, xtol=1e-14) if hfun(a) * hfun(b) < 0 else a)
        if left > lo:
            notes.append(f"h changes sign near {left:.12g}; domain shrunk on the left")
    if len(above):
        j = above[0]
        a = max(grid[j - 1], xi)
        b = grid[j]
        right = float(optimize.brentq(hfun, a, b, xtol=1e-14) if hfun(a) * hfun(b) < 0 else b)
        if right < hi:
            notes.append(f"h changes sign near {right:.12g}; domain shrunk on the right")
    return left, right, notes


def _numeric(h: Multiplier, xi: float, hint: tuple[float, float]) -> TransformSpec:
    hk, hpk, _ = h.kernels
    hfun = lambda x: float(hk(x))
    hpfun = lambda x: float(hpk(x))
    lo, hi = (float(v) for v in hint)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < xi < hi):
        raise DomainError(f"numeric transforms need a finite domain hint around xi, got {hint}", xi)
    left, right, notes = _sign_constant_domain(hfun, xi, lo, hi)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    increasing = hfun(xi) > 0

    def r(x: float) -> float:
        if not (left < x < right) and not (x == left == lo or x == right == hi):
            raise DomainError(f"{x!r} lies outside the transform domain ({left}, {right})", x)
        val, _ = integrate.quad(lambda s: 1.0 / hfun(s), xi, x, epsabs=NUMERIC_QUAD_TOL, epsrel=1e-12, limit=200)
        return float(val)

    # the image is evaluated slightly inside the domain where 1/h may blow up
    pad = 1e-9 * (right - left)
    za, zb = r(left + pad), r(right - pad)
    image = (min(za, zb), max(za, zb))
    ends = (left + pad, right - pad)

    def rinv(z: float) -> float:
        if not (image[0] <= z <= image[1]):
            raise DomainError(f"{z!r} lies outside r(domain) = {image}", z)
        a, b = ends
        fa = r(a) - z
        x = min(max(xi + hfun(xi) * z, a), b)
        for _ in range(100):
            fx = r(x) - z
            if abs(fx) <= NUMERIC_ROOT_TOL:
                return x
            if (fx < 0) == (fa < 0):
                a, fa = x, fx
            else:
                b = x
            newton = x - fx * hfun(x)
            x = newton if a < newton < b else 0.5 * (a + b)
            if b - a <= NUMERIC_ROOT_TOL * max(1.0, abs(x)):
                return x
        return x

    return TransformSpec(
        "numeric", xi, h,
        ScalarFn(py=r, label="r"), ScalarFn(py=rinv, label="r^-1"),
        ScalarFn(py=lambda x: 1.0 / hfun(x), label="r'"),
        ScalarFn(py=lambda x: -hpfun(x) / hfun(x) ** 2, label="r''"),
        (left, right), image, increasing, tuple(notes),
    )


def build_transform(h: Multiplier | Callable, h_prime: Callable | None = None, xi: float = 0.0,
                    domain_hint: tuple[float, float] | None = None, numeric: bool = False) -> TransformSpec:
    """Transform with ``r(xi) = 0``; closed form when ``h`` is a registered kind.

    ``numeric=True`` forces the quadrature route even for closed-form kinds,
    which is how the two constructions are cross-checked.
    """
    if not isinstance(h, Multiplier):
        if h_prime is None:
            raise ValueError("a plain callable h needs h_prime")
        h = custom_h(h, h_prime)
    xi = float(xi)
    hk = h.kernels[0]
    if xi < h.lower:
        raise DomainError(f"transform undefined at initial condition {xi!r}: h is not real there", xi)
    h0 = float(hk(xi))
    if h0 == 0.0 or not math.isfinite(h0):
        raise DomainError(f"transform undefined at initial condition {xi!r}: h(xi) = {h0}", xi)
    if not numeric:
        t = _analytic(h, xi)
        if t is not None:
            return t
    if domain_hint is None:
        lo = h.lower if math.isfinite(h.lower) else xi - 10.0
        domain_hint = (lo, xi + 10.0)
    return _numeric(h, xi, domain_hint)


# --- induced drifts ------------------------------------------------------------


def _as_scalar_fn(F) -> ScalarFn:
    if isinstance(F, ScalarFn):
        return F
    if callable(F):
        try:
            return scalar_fn(jit_scalar(F), getattr(F, "__name__", "F"))
        except Exception:
            return ScalarFn(py=F, label="F")
    raise TypeError("drift must be callable")


def _as_multiplier(h, h_prime) -> Multiplier:
    if isinstance(h, Multiplier):
        return h
    if h_prime is None:
        raise ValueError("a plain callable h needs h_prime")
    return custom_h(h, h_prime)


@functools.lru_cache(maxsize=None)
def _shifted_drift_kernel(F, hhp, c: float):
    @nb.njit(nogil=True)
    def G(x):
        return F(x) + c * hhp(x)

    return G


def add_hhp(F, h: Multiplier, c: float, label: str = "") -> ScalarFn:
    """``x -> F(x) + c h(x) h'(x)``."""
    F = _as_scalar_fn(F)
    if c == 0.0:
        return F
    hhp = h.kernels[2]
    if F.kernel is not None:
        return scalar_fn(_shifted_drift_kernel(F.kernel, hhp, float(c)), label)
    return ScalarFn(py=lambda x: F.py(x) + c * float(hhp(x)), label=label)


def strat_correction_drift(F, h, h_prime=None, f0_second_moment: float = 0.0) -> ScalarFn:
    """Stratonovich-form drift ``F - h h' m / 2`` of the discrete-time limit."""
    h = _as_multiplier(h, h_prime)
    return add_hhp(F, h, -0.5 * float(f0_second_moment), "strat-corrected F")


def ito_form_drift(F, h, h_prime=None, sigma2: float = 0.0, f0_second_moment: float = 0.0) -> ScalarFn:
    """Ito-form drift ``F + h h' (sigma2 - m) / 2``; ``F`` itself when ``sigma2 == m``."""
    h = _as_multiplier(h, h_prime)
    return add_hhp(F, h, 0.5 * (float(sigma2) - float(f0_second_moment)), "ito-form F")


@functools.lru_cache(maxsize=None)
def _transformed_kernel(F, hk, rinv, zlo: float, zhi: float):
    @nb.njit(nogil=True)
    def Ft(z):
        if not (zlo < z < zhi):
            return np.nan
        x = rinv(z)
        return F(x) / hk(x)

    return Ft


def transformed_drift(F, h, t: TransformSpec) -> ScalarFn:
    """``Ft(z) = F(r^-1(z)) / h(r^-1(z))`` on ``r(domain)``.

    The Python call raises :class:`DomainError` outside the image; the
    compiled kernel returns NaN there so path loops can flag the realization.
    """
    F = _as_scalar_fn(F)
    h = _as_multiplier(h, None) if isinstance(h, Multiplier) else t.h
    hk = h.kernels[0]
    zlo, zhi = t.image
    kernel = None
    if F.kernel is not None and t.r_inverse.kernel is not None:
        kernel = _transformed_kernel(F.kernel, hk, t.r_inverse.kernel, float(zlo), float(zhi))

    def py(z: float) -> float:
        if not t.in_image(z):
            raise DomainError(f"{z!r} lies outside r(domain) = {t.image}", z)
        x = t.r_inverse(z)
        return F.py(x) / float(hk(x))

    return ScalarFn(py=py, kernel=kernel, label="transformed F")
