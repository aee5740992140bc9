"""Fast chaotic maps on an interval: stepping, orbits and initial conditions.

Three maps are provided:

``PomeauManneville``
    ``g(y) = y (1 + 2**gamma * y**gamma)`` on ``[0, 1/2)`` and ``2y - 1`` on
    ``[1/2, 1]``; attractor ``[0, 1]``.
``ModifiedPomeauManneville``
    the same left branch, ``1 - 2y`` on ``[1/2, 1]`` and the odd extension
    ``-g(-y)`` on ``[-1, 0)``; attractor ``[-1, 1]``.
``Doubling``
    ``2y`` on ``[0, 1/2)`` and ``2y - 1`` on ``[1/2, 1]``.

The doubling map is exact in binary floating point, so a float orbit collapses
onto 0 within 53 iterates.  Orbits of ``Doubling`` are therefore generated on a
64-bit fixed-point window whose low bit is refilled at every step from a
deterministic bit source seeded by ``eta``: the result is the exact orbit of a
point within ``2**-53`` of ``eta``, rounded to double.  :func:`step` itself stays
the plain float map.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import DomainError
from .streams import next_double, stream_state

CLAMP_TOL = 1e-12

PM = 0
MPM = 1
DOUBLING = 2


class MapKind(str, enum.Enum):
    POMEAU_MANNEVILLE = "pomeau_manneville"
    MODIFIED_POMEAU_MANNEVILLE = "modified_pomeau_manneville"
    DOUBLING = "doubling"


_CODES = {
    MapKind.POMEAU_MANNEVILLE: PM,
    MapKind.MODIFIED_POMEAU_MANNEVILLE: MPM,
    MapKind.DOUBLING: DOUBLING,
}


@dataclass(frozen=True)
class FastMapSpec:
    kind: MapKind
    gamma: float = 0.0

    def __post_init__(self):
        kind = MapKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is not MapKind.DOUBLING:
            g = float(self.gamma)
            if not (math.isfinite(g) and 0.0 <= g < 1.0):
                raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
            object.__setattr__(self, "gamma", g)

    @property
    def attractor(self) -> tuple[float, float]:
        if self.kind is MapKind.MODIFIED_POMEAU_MANNEVILLE:
            return (-1.0, 1.0)
        return (0.0, 1.0)

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "gamma": self.gamma}


def pomeau_manneville(gamma: float) -> FastMapSpec:
    return FastMapSpec(MapKind.POMEAU_MANNEVILLE, gamma)


def modified_pomeau_manneville(gamma: float) -> FastMapSpec:
    return FastMapSpec(MapKind.MODIFIED_POMEAU_MANNEVILLE, gamma)


def doubling() -> FastMapSpec:
    return FastMapSpec(MapKind.DOUBLING)


@dataclass
class Orbit:
    points: np.ndarray
    burn_in: int = 0

    def __len__(self) -> int:
        return len(self.points)


# --- kernels ---------------------------------------------------------------


@nb.njit(inline="always")
def _clamp(y, lo, hi):
    if y > hi:
        return hi
    if y < lo:
        return lo
    return y


@nb.njit(inline="always")
def _left_branch(y, gamma, two_gamma):
    return y * (1.0 + two_gamma * y**gamma)


@nb.njit(nogil=True)
def pm_step(y, gamma, two_gamma):
    if y < 0.5:
        return _clamp(_left_branch(y, gamma, two_gamma), 0.0, 1.0)
    return 2.0 * y - 1.0


@nb.njit(nogil=True)
def mpm_step(y, gamma, two_gamma):
    z = -y if y < 0.0 else y
    if z < 0.5:
        out = _clamp(_left_branch(z, gamma, two_gamma), 0.0, 1.0)
    else:
        out = 1.0 - 2.0 * z
    return -out if y < 0.0 else out


@nb.njit(nogil=True)
def doubling_step(y):
    if y < 0.5:
        return 2.0 * y
    return 2.0 * y - 1.0


_TWO_M64 = 2.0**-64
_TWO_64 = 2.0**64


@nb.njit(nogil=True)
def _splitmix(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(nogil=True)
def fast_init(code, y):
    """Auxiliary state ``(window, bits)`` for a fast orbit started at ``y``."""
    if code != DOUBLING:
        return np.uint64(0), np.uint64(0)
    scaled = y * _TWO_64
    if scaled >= _TWO_64:
        w = np.uint64(0xFFFFFFFFFFFFFFFF)
    else:
        w = np.uint64(scaled)
    seed = _splitmix(np.uint64(w) ^ np.uint64(0x5DEECE66D))
    if seed == np.uint64(0):
        seed = np.uint64(1)
    # bits below double resolution are not zero but pseudo-random
    w = w | (seed >> np.uint64(53))
    return w, seed


@nb.njit(nogil=True)
def fast_next(code, gamma, two_gamma, y, w, bits):
    """Advance the fast state by one iterate; returns ``(y, w, bits)``."""
    if code == MPM:
        return mpm_step(y, gamma, two_gamma), w, bits
    if code == PM:
        return pm_step(y, gamma, two_gamma), w, bits
    # xorshift64 bit source refills the lowest bit of the window
    bits ^= bits << np.uint64(13)
    bits ^= bits >> np.uint64(7)
    bits ^= bits << np.uint64(17)
    w = (w << np.uint64(1)) | (bits >> np.uint64(63))
    return np.float64(w) * _TWO_M64, w, bits


@nb.njit(nogil=True)
def _orbit_kernel(code, gamma, eta, length, burn_in, out):
    two_gamma = 2.0**gamma
    y = eta
    w, bits = fast_init(code, y)
    for _ in range(burn_in):
        y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
    for i in range(length):
        out[i] = y
        y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)


@nb.njit(nogil=True)
def uniform_on(lo, hi, st):
    return lo + (hi - lo) * next_double(st)


# --- public API ------------------------------------------------------------


def _check_in(map_: FastMapSpec, y: float) -> float:
    lo, hi = map_.attractor
    y = float(y)
    if not (lo <= y <= hi):
        raise DomainError(f"{y!r} lies outside the attractor [{lo}, {hi}] of {map_.kind.value}", y)
    return y


def step(map_: FastMapSpec, y: float) -> float:
    """One iterate ``g(y)``."""
    y = _check_in(map_, y)
    lo, hi = map_.attractor
    if map_.kind is MapKind.DOUBLING:
        out = doubling_step(y)
    else:
        two_gamma = 2.0**map_.gamma
        # unclamped evaluation so rounding excursions can be checked
        z = abs(y)
        if z < 0.5:
            raw = z * (1.0 + two_gamma * z**map_.gamma)
        elif map_.kind is MapKind.MODIFIED_POMEAU_MANNEVILLE:
            raw = 1.0 - 2.0 * z
        else:
            raw = 2.0 * z - 1.0
        if not (-CLAMP_TOL <= raw <= 1.0 + CLAMP_TOL) and z < 0.5:
            raise DomainError(f"iterate of {y!r} left the attractor by more than {CLAMP_TOL}", raw)
        raw = min(max(raw, -1.0), 1.0) if map_.kind is MapKind.MODIFIED_POMEAU_MANNEVILLE else min(max(raw, 0.0), 1.0)
        out = -raw if (y < 0.0 and map_.kind is MapKind.MODIFIED_POMEAU_MANNEVILLE) else raw
    if not (lo - CLAMP_TOL <= out <= hi + CLAMP_TOL):
        raise DomainError(f"iterate of {y!r} left the attractor: {out!r}", out)
    return min(max(out, lo), hi)


def orbit(map_: FastMapSpec, eta: float, length: int, burn_in: int = 0) -> Orbit:
    """``length`` iterates of the map started at ``eta`` after discarding ``burn_in``."""
    eta = _check_in(map_, eta)
    if length < 0 or burn_in < 0:
        raise ValueError("length and burn_in must be nonnegative")
    out = np.empty(int(length))
    _orbit_kernel(map_.code, map_.gamma, eta, int(length), int(burn_in), out)
    return Orbit(out, int(burn_in))


def sample_initial(map_: FastMapSpec, rng_stream) -> float:
    """Uniform draw on the attractor; combine with a burn-in to approximate mu."""
    lo, hi = map_.attractor
    return float(uniform_on(lo, hi, stream_state(rng_stream)))
