"""Stable noise, superdiffusive fast-slow paths and Marcus equations.

Stable variates follow the Chambers-Mallows-Stuck construction in the
``S1`` parametrization (characteristic exponent ``alpha != 1``, skewness
``beta``, scale ``c``)::

    B = arctan(beta tan(pi alpha / 2)) / alpha
    S = (1 + beta**2 tan(pi alpha / 2)**2) ** (1 / (2 alpha))
    X = S sin(alpha (V + B)) / cos(V) ** (1/alpha)
          * (cos(V - alpha (V + B)) / W) ** ((1 - alpha) / alpha)

with ``V`` uniform on ``(-pi/2, pi/2)`` and ``W`` standard exponential.  At
``alpha = 2`` this is a centred Gaussian with variance ``2 c**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from ._parallel import run_chunks
from .errors import DomainError
from .fast_dynamics import FastMapSpec, MapKind, fast_init, fast_next
from .functions import ObservableSpec
from .slow_dynamics import RescaledPath, SlowSystemSpec, evolve
from .streams import (PURPOSE_INITIAL, PURPOSE_JUMPS, STATE_SIZE, init_state, master_key, next_double,
                      next_exponential, next_open_double, stream_state)


@dataclass(frozen=True)
class StableNoiseSpec:
    """Stable law of exponent ``1/gamma``; ``exponent`` is derived, never set."""

    gamma: float
    skew: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        g = float(self.gamma)
        if not (0.5 < g < 1.0):
            raise ValueError(f"gamma must lie in (1/2, 1), got {self.gamma}")
        if not (-1.0 <= float(self.skew) <= 1.0):
            raise ValueError(f"skew must lie in [-1, 1], got {self.skew}")
        if not (float(self.scale) > 0.0):
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "skew", float(self.skew))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def exponent(self) -> float:
        return 1.0 / self.gamma

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "skew": self.skew, "scale": self.scale}


@nb.njit(nogil=True)
def cms_variate(st, alpha, beta):
    """Standard (unit scale) stable variate, ``alpha`` in ``(0, 2]``, ``alpha != 1``."""
    v = math.pi * (next_open_double(st) - 0.5)
    w = next_exponential(st)
    t = beta * math.tan(0.5 * math.pi * alpha)
    b = math.atan(t) / alpha
    s = (1.0 + t * t) ** (0.5 / alpha)
    avb = alpha * (v + b)
    cv = math.cos(v)
    return s * math.sin(avb) / cv ** (1.0 / alpha) * (math.cos(v - avb) / w) ** ((1.0 - alpha) / alpha)


@nb.njit(nogil=True)
def _fill_stable(st, alpha, beta, scale, out):
    for i in range(out.shape[0]):
        out[i] = scale * cms_variate(st, alpha, beta)


def _check_exponent(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 2.0) or alpha == 1.0:
        raise ValueError(f"exponent must lie in (0, 2] and differ from 1, got {alpha}")
    return alpha


def stable_sample(spec: StableNoiseSpec, rng_stream, exponent: float | None = None) -> float:
    """One stable variate.  ``exponent`` overrides ``1/gamma`` for boundary checks only."""
    alpha = _check_exponent(spec.exponent if exponent is None else exponent)
    return float(spec.scale * cms_variate(stream_state(rng_stream), alpha, spec.skew))


def stable_samples(spec: StableNoiseSpec, n: int, rng_stream, exponent: float | None = None) -> np.ndarray:
    alpha = _check_exponent(spec.exponent if exponent is None else exponent)
    out = np.empty(int(n))
    _fill_stable(stream_state(rng_stream), alpha, spec.skew, spec.scale, out)
    return out


@dataclass
class LevyPath:
    grid: np.ndarray
    increments: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])


def levy_path(spec: StableNoiseSpec, T: float, dt: float, rng_stream) -> LevyPath:
    """``G`` on ``0, dt, ..., T``; increments are ``dt**gamma`` times stable variates."""
    m = int(round(T / dt))
    inc = stable_samples(spec, m, rng_stream) * dt**spec.gamma
    return LevyPath(np.arange(m + 1) * dt, inc)


# --- tails -----------------------------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    exponent: float
    slope: float
    intercept: float
    x_min: float
    x_max: float
    points: int
    samples: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def tail_exponent(samples: np.ndarray, x_min: float | None = None, x_max: float | None = None,
                  points: int = 25, q_min: float = 0.9, q_max: float = 0.9999, two_sided: bool = True) -> TailFit:
    """Least-squares slope of ``log P(|Y| > x)`` against ``log x``.

    Without explicit ``x_min``/``x_max`` the range runs between the empirical
    ``q_min`` and ``q_max`` quantiles of ``|Y|``.  The exponent is ``-slope``.
    """
    a = np.abs(np.asarray(samples, dtype=np.float64)) if two_sided else np.asarray(samples, dtype=np.float64)
    a = np.sort(a[np.isfinite(a)])
    n = len(a)
    if n < 10:
        raise ValueError("need at least 10 samples for a tail fit")
    lo = float(np.quantile(a, q_min)) if x_min is None else float(x_min)
    hi = float(np.quantile(a, q_max)) if x_max is None else float(x_max)
    if not (0.0 < lo < hi):
        raise ValueError(f"degenerate tail range [{lo}, {hi}]")
    xs = np.geomspace(lo, hi, points)
    surv = (n - np.searchsorted(a, xs, side="right")) / n
    keep = surv > 0
    if keep.sum() < 2:
        raise ValueError("no tail mass in the fitting range")
    slope, intercept = np.polyfit(np.log(xs[keep]), np.log(surv[keep]), 1)
    return TailFit(-float(slope), float(slope), float(intercept), lo, hi, int(keep.sum()), n)


# --- Birkhoff sums and superdiffusive paths ------------------------------------------------


@nb.njit(nogil=True)
def _birkhoff_kernel(code, gamma, f0, k0, k1, lo, hi, n, burn_in, scale, start, stop, out):
    two_gamma = 2.0**gamma
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    for b in range(start, stop):
        init_state(st, k0, k1, b, PURPOSE_INITIAL)
        y = lo + (hi - lo) * next_double(st)
        w, bits = fast_init(code, y)
        for _ in range(burn_in):
            y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
        s = 0.0
        for _ in range(n):
            s += f0(y)
            y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
        out[b] = s * scale


@nb.njit(nogil=True)
def _consecutive_blocks(code, gamma, f0, eta, n, burn_in, scale, out):
    two_gamma = 2.0**gamma
    y = eta
    w, bits = fast_init(code, y)
    for _ in range(burn_in):
        y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
    for b in range(out.shape[0]):
        s = 0.0
        for _ in range(n):
            s += f0(y)
            y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
        out[b] = s * scale


def birkhoff_terminal(map_: FastMapSpec, f0: ObservableSpec, n: int, samples: int, seed: int = 0,
                      burn_in: int = 10_000, workers: int = 1, mode: str = "independent",
                      eta: float | None = None) -> np.ndarray:
    """Samples of ``W_n(1) = n**-gamma sum_{j<n} f0(y_j)``.

    ``mode="independent"`` starts every sample from its own seeded initial
    condition; ``mode="consecutive"`` cuts one long orbit into blocks.
    """
    scale = float(n) ** (-map_.gamma) if map_.gamma > 0 else float(n) ** -0.5
    out = np.empty(int(samples))
    lo, hi = map_.attractor
    if mode == "consecutive":
        start = 0.5 * (lo + hi) + 0.1234567 * (hi - lo) / 2 if eta is None else float(eta)
        _consecutive_blocks(map_.code, map_.gamma, f0.kernel, start, int(n), int(burn_in), scale, out)
        return out
    if mode != "independent":
        raise ValueError(f"unknown mode {mode!r}")
    k0, k1 = master_key(seed)
    kernel = f0.kernel

    def work(a, b):
        _birkhoff_kernel(map_.code, map_.gamma, kernel, np.uint64(k0), np.uint64(k1), lo, hi,
                         int(n), int(burn_in), scale, a, b, out)

    run_chunks(work, int(samples), workers, chunk=4096)
    return out


def check_superdiffusive(spec: SlowSystemSpec, map_: FastMapSpec) -> None:
    if spec.scaling.kind != "superdiffusive":
        raise ValueError("evolve_superdiffusive needs a superdiffusive scaling")
    if map_.kind is MapKind.DOUBLING:
        raise ValueError("the superdiffusive regime needs an intermittent map")
    if map_.gamma != spec.scaling.gamma:
        raise ValueError(f"map gamma {map_.gamma} differs from the noise gamma {spec.scaling.gamma}")
    if spec.f0.value_at(0.0) == 0.0:
        raise DomainError("the superdiffusive limit needs f0(0) != 0", 0.0)


def evolve_superdiffusive(spec: SlowSystemSpec, map_: FastMapSpec, eta: float, T: float,
                          grid_dt: float | None = None, burn_in: int = 0) -> RescaledPath:
    """Slow path with ``(eps**gamma, eps)`` scalings, recorded at ``floor(t / eps)`` steps.

    The drift is the coupling ``f`` itself; no correction term is ever added
    in this regime.
    """
    check_superdiffusive(spec, map_)
    return evolve(spec, map_, eta, T, spec.epsilon if grid_dt is None else grid_dt, burn_in)


# --- Marcus equations --------------------------------------------------------------


def marcus_jump(transform, x_minus: float, jump: float) -> float:
    """State after a jump ``jump`` of the driver: ``r^-1(r(x-) + jump)``.

    Equivalently the value at time ``jump`` of the flow ``phi' = h(phi)``
    started from ``x-``.
    """
    return float(transform.inverse(transform.forward(float(x_minus)) + float(jump)))


def marcus_path(spec, T: float, dt: float, rng_stream, grid_dt: float | None = None):
    """Marcus equation ``dX = h(X) <> dG + F(X) dt`` through ``X = r^-1(Z)``.

    ``spec`` is an :class:`~fastslow.sde.SdeSpec` with stable noise and the
    transform interpretation.  Returns ``(x_path, z_path)``.
    """
    from .sde import Interpretation, integrate_path

    if spec.interpretation is not Interpretation.MARCUS_VIA_TRANSFORM:
        raise ValueError("marcus_path needs the transform interpretation")
    if spec.noise.kind != "stable":
        raise ValueError("marcus_path needs stable noise")
    return integrate_path(spec, T, dt, rng_stream, grid_dt=grid_dt, return_latent=True)


def quantile_scaling_slope(spec: StableNoiseSpec, times=(1.0, 2.0, 4.0, 8.0), q: float = 0.9, samples: int = 200_000,
                           seed: int = 0) -> float:
    """Fitted slope of ``log quantile_q |G(t)|`` against ``log t`` (expected ``gamma``).

    ``G(t)`` is built as a sum of ``t`` unit-time increments so the check
    exercises the increment generator rather than the scaling rule.
    """
    from .streams import PURPOSE_NOISE, Stream

    unit = int(max(times))
    st = Stream(seed, 0, PURPOSE_NOISE)
    inc = stable_samples(spec, samples * unit, st).reshape(samples, unit)
    paths = np.cumsum(inc, axis=1)
    qs = [np.quantile(np.abs(paths[:, int(t) - 1]), q) for t in times]
    slope, _ = np.polyfit(np.log(times), np.log(qs), 1)
    return float(slope)


def jump_stream_state(seed: int, index: int) -> np.ndarray:
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    k0, k1 = master_key(seed)
    init_state(st, np.uint64(k0), np.uint64(k1), index, PURPOSE_JUMPS)
    return st
