"""Limit-variance estimators for Birkhoff sums of a fast map.

``green_kubo`` sums empirical autocovariances of an observable along one long
orbit up to a lag cutoff.  ``moment_estimator`` averages ``S_n**2 / n`` over
independent blocks started from (approximately) invariant initial states.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba as nb
import numpy as np
import scipy.fft

from ._parallel import run_chunks
from .errors import EstimatorError
from .fast_dynamics import FastMapSpec, Orbit, fast_init, fast_next, orbit
from .functions import ObservableSpec, _apply1
from .streams import PURPOSE_INITIAL, STATE_SIZE, init_state, master_key, next_double

DEFAULT_LAG_CUTOFF = 1000
NEGATIVE_SIGMA2 = "negative_sigma2"


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma2: float
    f0_second_moment: float
    lag_cutoff: int
    orbit_length: int
    standard_error: float
    method: str = "green_kubo"
    seed: int | None = None
    quality_flags: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.quality_flags

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quality_flags"] = list(self.quality_flags)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def observable_values(obs: ObservableSpec, points: np.ndarray) -> np.ndarray:
    """``f0`` along an orbit, centered on the orbit mean when ``obs.centered``."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    vals = np.empty_like(pts)
    _apply1(obs.kernel, pts, vals)
    if obs.centered:
        if np.ptp(vals) == 0.0:
            vals[:] = 0.0
        else:
            vals -= vals.mean()
    return vals


def autocovariances(values: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased estimates ``C(k) = N**-1 sum_j v_j v_{j+k}`` for ``k = 0..max_lag``."""
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    if max_lag >= n:
        raise EstimatorError(f"max_lag={max_lag} must be below the series length {n}")
    # zero padding by max_lag keeps the circular correlation exact up to that lag
    size = scipy.fft.next_fast_len(n + max_lag, real=True)
    spec = scipy.fft.rfft(v, size)
    acf = scipy.fft.irfft(spec * np.conj(spec), size)[: max_lag + 1]
    return acf / n


def green_kubo(orb: Orbit | np.ndarray, obs: ObservableSpec, lag_cutoff: int = DEFAULT_LAG_CUTOFF) -> CovarianceEstimate:
    """``C(0) + 2 sum_{k=1}^{L} C(k)`` with a rough standard error.

    The error bar uses the large-sample variance of a truncated spectral
    estimate at frequency zero, ``2 (2L + 1) sigma**4 / N``.
    """
    points = orb.points if isinstance(orb, Orbit) else np.asarray(orb, dtype=np.float64)
    n = len(points)
    lag_cutoff = int(lag_cutoff)
    if lag_cutoff < 1:
        raise EstimatorError("lag_cutoff must be positive")
    if lag_cutoff * 100 > n:
        raise EstimatorError(f"lag_cutoff={lag_cutoff} is too large for an orbit of length {n} (need L <= N/100)")
    vals = observable_values(obs, points)
    c = autocovariances(vals, lag_cutoff)
    sigma2 = float(c[0] + 2.0 * c[1:].sum())
    se = abs(sigma2) * math.sqrt(2.0 * (2 * lag_cutoff + 1) / n)
    flags = (NEGATIVE_SIGMA2,) if sigma2 < 0.0 else ()
    return CovarianceEstimate(sigma2, float(c[0]), lag_cutoff, n, se, "green_kubo", None, flags)


@nb.njit(nogil=True)
def _block_sums(code, gamma, f0, k0, k1, lo, hi, n, burn_in, start, stop, sums, squares):
    two_gamma = 2.0**gamma
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    for b in range(start, stop):
        init_state(st, k0, k1, b, PURPOSE_INITIAL)
        y = lo + (hi - lo) * next_double(st)
        w, bits = fast_init(code, y)
        for _ in range(burn_in):
            y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
        s = 0.0
        s2 = 0.0
        for _ in range(n):
            v = f0(y)
            s += v
            s2 += v * v
            y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
        sums[b] = s
        squares[b] = s2


def block_sums(map_: FastMapSpec, obs: ObservableSpec, block_length: int, blocks: int, seed: int = 0,
               burn_in: int = 10_000, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-block ``(sum f0, sum f0**2)`` for ``blocks`` independent starts."""
    k0, k1 = master_key(seed)
    lo, hi = map_.attractor
    sums = np.empty(int(blocks))
    squares = np.empty(int(blocks))
    kernel = obs.kernel

    def work(a, b):
        _block_sums(map_.code, map_.gamma, kernel, np.uint64(k0), np.uint64(k1), lo, hi,
                    int(block_length), int(burn_in), a, b, sums, squares)

    run_chunks(work, int(blocks), workers, chunk=max(1, int(blocks) // (8 * max(1, workers)) or 1))
    return sums, squares


def moment_estimator(map_: FastMapSpec, obs: ObservableSpec, block_length: int, blocks: int, seed: int = 0,
                     burn_in: int = 10_000, workers: int = 1) -> CovarianceEstimate:
    """``n**-1 E (sum_{j<n} f0(y_j))**2`` averaged over independent blocks.

    With ``obs.centered`` the pooled mean of ``f0`` is removed from every
    block sum.  The standard error is the empirical one over blocks.
    """
    n = int(block_length)
    if n < 1 or blocks < 2:
        raise EstimatorError("need block_length >= 1 and at least two blocks")
    sums, squares = block_sums(map_, obs, n, blocks, seed, burn_in, workers)
    total = blocks * n
    mean = float(sums.sum() / total)
    if obs.centered:
        q = (sums - n * mean) ** 2 / n
        sigma2 = float(q.sum() / (blocks - 1))
        second = float(squares.sum() / total - mean * mean)
    else:
        q = sums**2 / n
        sigma2 = float(q.mean())
        second = float(squares.sum() / total)
    se = float(q.std(ddof=1) / math.sqrt(blocks))
    flags = (NEGATIVE_SIGMA2,) if sigma2 < 0.0 else ()
    return CovarianceEstimate(sigma2, max(second, 0.0), n, total, se, "moments", int(seed), flags)


def estimate_constants(map_: FastMapSpec, obs: ObservableSpec, length: int = 10_000_000,
                       lag_cutoff: int = DEFAULT_LAG_CUTOFF, seed: int = 0, burn_in: int = 10_000) -> CovarianceEstimate:
    """Green-Kubo on one orbit whose start is drawn from the seeded stream 0."""
    from .fast_dynamics import sample_initial
    from .streams import Stream

    eta = sample_initial(map_, Stream(seed, 0, PURPOSE_INITIAL))
    est = green_kubo(orbit(map_, eta, length, burn_in), obs, lag_cutoff)
    return CovarianceEstimate(est.sigma2, est.f0_second_moment, est.lag_cutoff, est.orbit_length,
                              est.standard_error, est.method, int(seed), est.quality_flags)
