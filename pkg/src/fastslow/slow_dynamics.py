"""Fast-slow recursions and their rescaled paths.

The slow variable follows

    x(n+1) = x(n) + a h(x(n)) f0(y(n)) + b f(x(n), y(n), eps)

with ``(a, b) = (eps, eps**2)`` and ``eps**-2`` steps per unit time in the
diffusive scaling, or ``(eps**gamma, eps)`` and ``eps**-1`` steps per unit
time in the superdiffusive one.  Paths are recorded piecewise-constantly: the
value at time ``t`` is the slow state after ``floor(t * steps_per_unit)``
steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import DomainError
from .fast_dynamics import FastMapSpec, _check_in, fast_init, fast_next, orbit
from .functions import Coupling, Multiplier, ObservableSpec, ScalarFn, constant_h, identity, power_h, quadratic_coupling

# guards against float noise in t / eps**2 when t is meant to hit a step exactly
_TIME_SLACK = 1e-9

STATUS_OK = 0
STATUS_NONFINITE = 1


@dataclass(frozen=True)
class NoiseScaling:
    kind: str = "diffusive"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("diffusive", "superdiffusive"):
            raise ValueError(f"unknown noise scaling {self.kind!r}")
        if self.kind == "superdiffusive":
            g = float(self.gamma) if self.gamma is not None else math.nan
            if not (0.5 < g < 1.0):
                raise ValueError(f"superdiffusive gamma must lie in (1/2, 1), got {self.gamma}")

    def coefficients(self, eps: float) -> tuple[float, float, float]:
        """``(noise factor, drift factor, steps per unit time)``."""
        if self.kind == "diffusive":
            return eps, eps * eps, (1.0 / (eps * eps) if eps > 0 else math.inf)
        return eps**self.gamma, eps, (1.0 / eps if eps > 0 else math.inf)


DIFFUSIVE = NoiseScaling("diffusive")


def superdiffusive(gamma: float) -> NoiseScaling:
    return NoiseScaling("superdiffusive", float(gamma))


@dataclass(frozen=True)
class SlowSystemSpec:
    epsilon: float
    xi: float
    f0: ObservableSpec = field(default_factory=identity)
    h: Multiplier = field(default_factory=constant_h)
    f: Coupling = field(default_factory=lambda: Coupling("zero"))
    scaling: NoiseScaling = DIFFUSIVE

    def __post_init__(self):
        eps = float(self.epsilon)
        # eps = 0 is accepted for single steps (the identity) but cannot be evolved
        if not (0.0 <= eps <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "xi", float(self.xi))

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return self.scaling.coefficients(self.epsilon)

    def with_epsilon(self, eps: float) -> "SlowSystemSpec":
        return SlowSystemSpec(eps, self.xi, self.f0, self.h, self.f, self.scaling)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "xi": self.xi,
            "f0": self.f0.to_dict(),
            "h": self.h.to_dict(),
            "f": self.f.to_dict(),
            "scaling": {"kind": self.scaling.kind, "gamma": self.scaling.gamma},
        }


def paper_system(epsilon: float, xi: float = 1.0) -> SlowSystemSpec:
    """``x += eps sqrt(x) y + eps**2 (3/4 - x) y**2 / 2``, the square-root test system."""
    return SlowSystemSpec(epsilon, xi, identity(), power_h(0.5), quadratic_coupling(0.375, -0.5))


@dataclass
class RescaledPath:
    grid: np.ndarray
    values: np.ndarray
    epsilon: float
    interpolation: str = "piecewise_constant"
    clamps: int = 0
    status: int = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def at(self, t: float) -> float:
        k = int(np.searchsorted(self.grid, t + _TIME_SLACK, side="right")) - 1
        return float(self.values[max(k, 0)])


def make_grid(T: float, grid_dt: float) -> np.ndarray:
    m = int(round(T / grid_dt))
    if m < 0 or abs(m * grid_dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of grid_dt={grid_dt}")
    return np.arange(m + 1) * grid_dt


def step_indices(times: np.ndarray, steps_per_unit: float) -> np.ndarray:
    """Number of slow steps taken by time ``t`` for every recorded time."""
    return np.floor(np.asarray(times, dtype=np.float64) * steps_per_unit + _TIME_SLACK).astype(np.int64)


# --- kernels -------------------------------------------------------------------


@nb.njit(nogil=True)
def slow_increment(h, f0, f, lower, a, b, eps, x, y):
    """Returns ``(x_next, clamped)``."""
    xe = x
    clamped = False
    if x < lower:
        xe = lower
        clamped = True
    return x + a * h(xe) * f0(y) + b * f(x, y, eps), clamped


@nb.njit(nogil=True)
def run_slow(code, gamma, y, w, bits, h, f0, f, lower, a, b, eps, xi, idx, out):
    """Joint fast-slow iteration recording ``x`` at step counts ``idx`` (sorted).

    Returns ``(clamps, status)``; after a non-finite state the remaining slots
    are filled with NaN.
    """
    two_gamma = 2.0**gamma
    m = idx.shape[0]
    x = xi
    clamps = 0
    k = 0
    n = 0
    while k < m:
        while k < m and idx[k] == n:
            out[k] = x
            k += 1
        if k == m:
            break
        x, c = slow_increment(h, f0, f, lower, a, b, eps, x, y)
        if c:
            clamps += 1
        if not math.isfinite(x):
            while k < m:
                out[k] = np.nan
                k += 1
            return clamps, STATUS_NONFINITE
        y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
        n += 1
    return clamps, STATUS_OK


@nb.njit(nogil=True)
def _evolve_kernel(code, gamma, eta, burn_in, h, f0, f, lower, a, b, eps, xi, idx, out):
    y = eta
    w, bits = fast_init(code, y)
    two_gamma = 2.0**gamma
    for _ in range(burn_in):
        y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
    return run_slow(code, gamma, y, w, bits, h, f0, f, lower, a, b, eps, xi, idx, out)


def kernel_args(spec: SlowSystemSpec) -> tuple:
    h = spec.h.kernels[0]
    a, b, _ = spec.coefficients
    return (h, spec.f0.kernel, spec.f.kernel, float(spec.h.lower), a, b, spec.epsilon, spec.xi)


# --- public API ----------------------------------------------------------------


def step_slow(spec: SlowSystemSpec, x: float, y: float) -> float:
    """One step of the slow recursion; ``h`` is evaluated at ``max(x, lower)``."""
    a, b, _ = spec.coefficients
    if spec.epsilon == 0.0:
        return float(x)
    out, _ = slow_increment(*kernel_args(spec)[:4], a, b, spec.epsilon, float(x), float(y))
    return float(out)


def evolve(spec: SlowSystemSpec, map_: FastMapSpec, eta: float, T: float, grid_dt: float = 0.01,
           burn_in: int = 0) -> RescaledPath:
    """Rescaled slow path on ``0, grid_dt, ..., T`` started from ``(xi, eta)``.

    ``burn_in`` fast iterates are applied to ``eta`` before the slow variable
    starts moving.
    """
    if spec.epsilon <= 0.0:
        raise ValueError("evolve needs epsilon > 0")
    if spec.scaling.kind == "superdiffusive" and map_.gamma != spec.scaling.gamma:
        raise ValueError(f"map gamma {map_.gamma} differs from the scaling gamma {spec.scaling.gamma}")
    eta = _check_in(map_, eta)
    grid = make_grid(T, grid_dt)
    _, _, per_unit = spec.coefficients
    idx = step_indices(grid, per_unit)
    out = np.empty(len(grid))
    clamps, status = _evolve_kernel(map_.code, map_.gamma, eta, int(burn_in), *kernel_args(spec), idx, out)
    return RescaledPath(grid, out, spec.epsilon, clamps=int(clamps), status=int(status))


# --- averaged drift and the K2 diagnostic --------------------------------------------


@nb.njit(nogil=True)
def lattice_interp(xs, vs, x):
    """Piecewise-linear interpolation, extrapolating linearly beyond the ends."""
    n = xs.shape[0]
    if x <= xs[0]:
        j = 0
    elif x >= xs[n - 1]:
        j = n - 2
    else:
        j = np.searchsorted(xs, x, side="right") - 1
        if j > n - 2:
            j = n - 2
    t = (x - xs[j]) / (xs[j + 1] - xs[j])
    return vs[j] + t * (vs[j + 1] - vs[j])


@nb.njit(nogil=True)
def _lattice_average(f, xs, ys, out):
    for i in range(xs.shape[0]):
        s = 0.0
        for j in range(ys.shape[0]):
            s += f(xs[i], ys[j], 0.0)
        out[i] = s / ys.shape[0]


@dataclass
class LatticeDrift:
    """Estimate of ``F(x) = int f(x, y, 0) dmu(y)`` tabulated on a lattice."""

    xs: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        if np.ndim(x) == 0:
            return float(lattice_interp(self.xs, self.values, float(x)))
        return np.array([lattice_interp(self.xs, self.values, float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def as_scalar_fn(self) -> ScalarFn:
        return ScalarFn(py=self.__call__, label="lattice F")


def estimate_averaged_drift(coupling: Coupling, map_: FastMapSpec, lattice: np.ndarray | None = None,
                            orbit_length: int = 1_000_000, eta: float | None = None,
                            burn_in: int = 10_000) -> LatticeDrift:
    """Average ``f(x, y, 0)`` over a fast orbit at every lattice point."""
    xs = np.linspace(-2.0, 6.0, 81) if lattice is None else np.asarray(lattice, dtype=np.float64)
    if len(xs) < 2 or np.any(np.diff(xs) <= 0):
        raise ValueError("lattice must be strictly increasing with at least two points")
    lo, hi = map_.attractor
    start = 0.5 * (lo + hi) + 0.1234567 * (hi - lo) / 2 if eta is None else eta
    ys = orbit(map_, start, orbit_length, burn_in).points
    out = np.empty(len(xs))
    _lattice_average(coupling.kernel, xs, ys, out)
    return LatticeDrift(xs, out)


@nb.njit(nogil=True)
def _k2_kernel(code, gamma, eta, burn_in, h, f0, f, lower, a, b, eps, xi, steps, xs, vs):
    two_gamma = 2.0**gamma
    y = eta
    w, bits = fast_init(code, y)
    for _ in range(burn_in):
        y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
    x = xi
    k2 = 0.0
    best = 0.0
    for _ in range(steps):
        k2 += b * (f(x, y, 0.0) - lattice_interp(xs, vs, x))
        if abs(k2) > best:
            best = abs(k2)
        x, _ = slow_increment(h, f0, f, lower, a, b, eps, x, y)
        if not math.isfinite(x):
            return np.nan
        y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
    return best


def ldp_diagnostic_k2(spec: SlowSystemSpec, map_: FastMapSpec, eta: float, T: float,
                      drift: LatticeDrift | None = None, burn_in: int = 0) -> float:
    """``sup_t |K2(t)|`` over ``[0, T]`` for one realization.

    ``K2(t) = eps**2 sum_{j < t/eps**2} (f(x_j, y_j, 0) - F(x_j))``.  The
    supremum runs over every step count, which is the grid supremum for any
    grid finer than ``eps**2``.
    """
    eta = _check_in(map_, eta)
    if T < 0:
        raise ValueError("T must be nonnegative")
    if drift is None:
        drift = estimate_averaged_drift(spec.f, map_)
    _, _, per_unit = spec.coefficients
    steps = int(step_indices(np.array([T]), per_unit)[0])
    return float(_k2_kernel(map_.code, map_.gamma, eta, int(burn_in), *kernel_args(spec), steps, drift.xs, drift.values))


def check_domain(x: float, lower: float) -> None:
    if x < lower:
        raise DomainError(f"slow state {x!r} lies below the domain bound {lower}", x)
