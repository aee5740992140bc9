"""Seeded Monte Carlo ensembles and the statistics computed from them.

Realization ``i`` of a run with master seed ``s`` draws all of its randomness
from the counter-based streams ``(s, i, purpose)``, so any realization can be
recomputed in isolation.  Realizations are processed in fixed chunks of
:data:`CHUNK` indices; each chunk reduces its own moment accumulators and the
chunk results are merged pairwise in index order.  The worker count therefore
changes wall time only, never a single bit of the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numba as nb
import numpy as np

from ._parallel import default_workers, run_chunks
from .errors import EnsembleFailure
from .fast_dynamics import FastMapSpec, fast_init, fast_next
from .sde import CirParams, PreparedSde, SdeSpec, ncx2_variate, prepare, sde_kernel
from .slow_dynamics import STATUS_NONFINITE, STATUS_OK, SlowSystemSpec, kernel_args, run_slow, step_indices
from .streams import PURPOSE_EXACT, PURPOSE_INITIAL, PURPOSE_NOISE, STATE_SIZE, init_state, master_key, next_double

CHUNK = 512
FAILURE_THRESHOLD = 0.01
_TIME_SLACK = 1e-9


# --- models ------------------------------------------------------------------


@dataclass(frozen=True)
class FastSlowModel:
    spec: SlowSystemSpec
    map: FastMapSpec
    burn_in: int = 10_000

    @property
    def label(self) -> str:
        return f"map eps={self.spec.epsilon:g}"


@dataclass(frozen=True)
class SdeModel:
    spec: SdeSpec
    dt: float = 1e-3

    @property
    def label(self) -> str:
        return f"sde interpretation={self.spec.label or self.spec.interpretation.value}"


@dataclass(frozen=True)
class CirModel:
    params: CirParams

    @property
    def label(self) -> str:
        return "cir exact"


Model = Union[FastSlowModel, SdeModel, CirModel]


@dataclass(frozen=True)
class EnsembleConfig:
    """``times`` are the recorded times; by default ``0, grid_dt, ..., T``."""

    model: Model
    realizations: int
    T: float
    grid_dt: float = 0.01
    master_seed: int = 0
    workers: int = 1
    times: tuple[float, ...] | None = None
    store_paths: bool = True
    allowed_failure: float = FAILURE_THRESHOLD

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be positive")
        if not (0 <= int(self.master_seed) < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def record_times(self) -> np.ndarray:
        if self.times is not None:
            ts = np.asarray(sorted(self.times), dtype=np.float64)
            if ts[0] < 0 or ts[-1] > self.T + _TIME_SLACK:
                raise ValueError("recorded times must lie in [0, T]")
            return ts
        m = int(round(self.T / self.grid_dt))
        return np.arange(m + 1) * self.grid_dt


# --- mergeable accumulators ----------------------------------------------------------


@dataclass
class MomentAccumulator:
    """Count, mean and centred second moment per recorded time (Chan et al. merge)."""

    count: np.ndarray
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, m: int) -> "MomentAccumulator":
        return cls(np.zeros(m), np.zeros(m), np.zeros(m))

    @classmethod
    def from_values(cls, values: np.ndarray, ok: np.ndarray) -> "MomentAccumulator":
        v = values[ok]
        n = v.shape[0]
        m = values.shape[1]
        if n == 0:
            return cls.empty(m)
        # heavy-tailed ensembles may overflow to inf; that is the honest answer
        with np.errstate(over="ignore", invalid="ignore"):
            mean = v.mean(axis=0)
            m2 = ((v - mean) ** 2).sum(axis=0)
        return cls(np.full(m, float(n)), mean, m2)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        n = self.count + other.count
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            delta = other.mean - self.mean
            frac = np.where(n > 0, other.count / np.where(n > 0, n, 1.0), 0.0)
            mean = self.mean + delta * frac
            m2 = self.m2 + other.m2 + delta * delta * self.count * frac
        return MomentAccumulator(n, mean, m2)

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / np.maximum(self.count - 1.0, 1.0)

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.variance / np.maximum(self.count, 1.0))


def merge_pairwise(items: list):
    """Fixed-shape binary tree merge in list order."""
    if not items:
        raise ValueError("nothing to merge")
    while len(items) > 1:
        nxt = [items[i].merge(items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


@dataclass
class ChunkStats:
    abs_moments: MomentAccumulator
    moments: MomentAccumulator
    second: MomentAccumulator

    def merge(self, other: "ChunkStats") -> "ChunkStats":
        return ChunkStats(self.abs_moments.merge(other.abs_moments), self.moments.merge(other.moments),
                          self.second.merge(other.second))


# --- chunk kernels -----------------------------------------------------------------


@nb.njit(nogil=True)
def _fastslow_chunk(code, gamma, burn_in, k0, k1, lo, hi, h, f0, f, lower, a, b, eps, xi, idx, start, stop,
                    out, clamps, status):
    two_gamma = 2.0**gamma
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    for i in range(start, stop):
        init_state(st, k0, k1, i, PURPOSE_INITIAL)
        y = lo + (hi - lo) * next_double(st)
        w, bits = fast_init(code, y)
        for _ in range(burn_in):
            y, w, bits = fast_next(code, gamma, two_gamma, y, w, bits)
        c, s = run_slow(code, gamma, y, w, bits, h, f0, f, lower, a, b, eps, xi, idx, out[i - start])
        clamps[i] = c
        status[i] = s


@nb.njit(nogil=True)
def _sde_chunk(scheme, F, h, lower, sigma, x0, dt, idx, k0, k1, stable, alpha, skew, scale, gamma, rinv, map_back,
               start, stop, out, latent, status):
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    for i in range(start, stop):
        init_state(st, k0, k1, i, PURPOSE_NOISE)
        status[i] = sde_kernel(scheme, F, h, lower, sigma, x0, dt, idx, st, stable, alpha, skew, scale, gamma,
                               rinv, map_back, out[i - start], latent[i - start])


@nb.njit(nogil=True)
def _cir_chunk(sigma2, alpha, beta, xi, times, k0, k1, start, stop, out):
    """Exact CIR paths on ``times`` via the noncentral chi-square transition."""
    st = np.zeros(STATE_SIZE, dtype=np.uint64)
    k = 4.0 * alpha * beta / sigma2
    for i in range(start, stop):
        init_state(st, k0, k1, i, PURPOSE_EXACT)
        x = xi
        t_prev = 0.0
        for j in range(times.shape[0]):
            dt = times[j] - t_prev
            if dt > 0.0:
                c = sigma2 / (4.0 * alpha) * (-math.expm1(-alpha * dt))
                lam = math.exp(-alpha * dt) * x / c
                x = c * ncx2_variate(st, k, lam)
            out[i - start, j] = x
            t_prev = times[j]


# --- ensemble ----------------------------------------------------------------------


@dataclass
class ErrorRecord:
    realization: int
    status: int
    reason: str

    def to_dict(self) -> dict:
        return {"realization": self.realization, "status": self.status, "reason": self.reason}


@dataclass
class PathEnsemble:
    """Recorded values of every realization plus streamed moment statistics.

    ``values`` has one row per realization when paths are stored; otherwise
    only ``terminal`` (the value at the last recorded time) is kept.
    """

    label: str
    times: np.ndarray
    terminal: np.ndarray
    status: np.ndarray
    clamps: np.ndarray
    stats: ChunkStats
    master_seed: int
    values: np.ndarray | None = None
    latent: np.ndarray | None = None
    errors: list[ErrorRecord] = field(default_factory=list)

    @property
    def realizations(self) -> int:
        return len(self.terminal)

    @property
    def ok(self) -> np.ndarray:
        return self.status == STATUS_OK

    @property
    def clamp_fraction(self) -> float:
        return float(np.mean(self.clamps > 0)) if len(self.clamps) else 0.0

    def marginal(self, t: float | None = None) -> np.ndarray:
        """Values of the successful realizations at recorded time ``t`` (default: the last one)."""
        if t is None:
            return self.terminal[self.ok]
        j = self.time_index(t)
        if self.values is None:
            if j != len(self.times) - 1:
                raise ValueError("paths were not stored; only the terminal marginal is available")
            return self.terminal[self.ok]
        return self.values[self.ok, j]

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the recorded grid")
        return j

    def metadata(self) -> dict:
        return {
            "label": self.label,
            "realizations": self.realizations,
            "failed": int((~self.ok).sum()),
            "clamped_realizations": int((self.clamps > 0).sum()),
            "clamp_fraction": self.clamp_fraction,
            "total_clamps": int(self.clamps.sum()),
            "master_seed": self.master_seed,
        }


def _chunk_stats(values: np.ndarray, ok: np.ndarray) -> ChunkStats:
    return ChunkStats(MomentAccumulator.from_values(np.abs(values), ok),
                      MomentAccumulator.from_values(values, ok),
                      MomentAccumulator.from_values(values * values, ok))


def run_ensemble(cfg: EnsembleConfig) -> PathEnsemble:
    """Run every realization and reduce deterministically.

    Raises :class:`EnsembleFailure` when more than ``cfg.allowed_failure`` of
    the realizations end with a non-finite state.
    """
    times = cfg.record_times()
    m = len(times)
    R = int(cfg.realizations)
    k0, k1 = (np.uint64(k) for k in master_key(cfg.master_seed))
    terminal = np.empty(R)
    status = np.zeros(R, dtype=np.int64)
    clamps = np.zeros(R, dtype=np.int64)
    values = np.empty((R, m)) if cfg.store_paths else None
    model = cfg.model
    latent_all = None

    if isinstance(model, FastSlowModel):
        spec, map_ = model.spec, model.map
        if spec.scaling.kind == "superdiffusive" and map_.gamma != spec.scaling.gamma:
            raise ValueError("map gamma differs from the scaling gamma")
        _, _, per_unit = spec.coefficients
        idx = step_indices(times, per_unit)
        lo, hi = map_.attractor
        args = kernel_args(spec)

        def simulate(a, b, out, latent):
            _fastslow_chunk(map_.code, map_.gamma, int(model.burn_in), k0, k1, lo, hi, *args, idx, a, b,
                            out, clamps, status)
    elif isinstance(model, SdeModel):
        p: PreparedSde = prepare(model.spec)
        dt = float(model.dt)
        idx = step_indices(times, 1.0 / dt)
        if p.map_back and cfg.store_paths:
            latent_all = np.empty((R, m))

        def simulate(a, b, out, latent):
            _sde_chunk(p.scheme, p.F, p.h, p.lower, p.sigma, p.x0, dt, idx, k0, k1, p.stable, p.alpha, p.skew,
                       p.scale, p.gamma, p.rinv, p.map_back, a, b, out, latent, status)
    elif isinstance(model, CirModel):
        q = model.params

        def simulate(a, b, out, latent):
            _cir_chunk(q.sigma2, q.alpha, q.beta, q.xi, times, k0, k1, a, b, out)
    else:
        raise TypeError(f"unknown model {type(model).__name__}")

    def work(a, b):
        out = values[a:b] if values is not None else np.empty((b - a, m))
        latent = latent_all[a:b] if latent_all is not None else np.empty((b - a, m))
        simulate(a, b, out, latent)
        terminal[a:b] = out[:, -1]
        return _chunk_stats(out, status[a:b] == STATUS_OK)

    workers = default_workers() if cfg.workers is None else int(cfg.workers)
    stats = merge_pairwise(run_chunks(work, R, workers, CHUNK))
    bad = np.nonzero(status != STATUS_OK)[0]
    errors = [ErrorRecord(int(i), int(status[i]), "non-finite state" if status[i] == STATUS_NONFINITE else "error")
              for i in bad]
    ens = PathEnsemble(model.label, times, terminal, status, clamps, stats, int(cfg.master_seed), values,
                       latent_all, errors)
    if len(bad) > cfg.allowed_failure * R:
        raise EnsembleFailure(f"{len(bad)} of {R} realizations failed", len(bad), R)
    return ens


def single_realization(cfg: EnsembleConfig, index: int) -> np.ndarray:
    """Recompute realization ``index`` alone (for reproducibility checks)."""
    R = int(index) + 1
    sub = EnsembleConfig(cfg.model, R, cfg.T, cfg.grid_dt, cfg.master_seed, 1, cfg.times, True, 1.0)
    # a one-element window is enough: streams depend on the index only
    times = sub.record_times()
    m = len(times)
    out = np.empty((1, m))
    model = cfg.model
    k0, k1 = (np.uint64(k) for k in master_key(cfg.master_seed))
    status = np.zeros(R, dtype=np.int64)
    clamps = np.zeros(R, dtype=np.int64)
    if isinstance(model, FastSlowModel):
        _, _, per_unit = model.spec.coefficients
        lo, hi = model.map.attractor
        _fastslow_chunk(model.map.code, model.map.gamma, int(model.burn_in), k0, k1, lo, hi,
                        *kernel_args(model.spec), step_indices(times, per_unit), index, index + 1, out, clamps, status)
    elif isinstance(model, SdeModel):
        p = prepare(model.spec)
        latent = np.empty((1, m))
        _sde_chunk(p.scheme, p.F, p.h, p.lower, p.sigma, p.x0, float(model.dt), step_indices(times, 1.0 / model.dt),
                   k0, k1, p.stable, p.alpha, p.skew, p.scale, p.gamma, p.rinv, p.map_back, index, index + 1,
                   out, latent, status)
    else:
        _cir_chunk(model.params.sigma2, model.params.alpha, model.params.beta, model.params.xi, times, k0, k1,
                   index, index + 1, out)
    return out[0]


# --- statistics --------------------------------------------------------------------


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    masses: np.ndarray

    def rows(self):
        for a, b, m in zip(self.edges[:-1], self.edges[1:], self.masses):
            yield float(a), float(b), float(m)


def histogram(samples: np.ndarray, bins: int = 200, range_: tuple[float, float] | None = None) -> Histogram:
    """Mass per bin; the range expands to cover every finite sample.

    The default range is ``[0, 1.05 max]`` for nonnegative data and the sample
    range padded by 5% otherwise.
    """
    x = np.asarray(samples, dtype=np.float64)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        raise ValueError("empty sample")
    lo_x, hi_x = float(x.min()), float(x.max())
    if range_ is None:
        if lo_x >= 0.0:
            lo, hi = 0.0, 1.05 * hi_x
        else:
            pad = 0.05 * (hi_x - lo_x)
            lo, hi = lo_x - pad, hi_x + pad
    else:
        lo, hi = (float(v) for v in range_)
        lo, hi = min(lo, lo_x), max(hi, hi_x)
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(x, bins=int(bins), range=(lo, hi))
    return Histogram(edges, counts / counts.sum())


def ks_statistic(sample_a: np.ndarray, reference: Callable | np.ndarray) -> float:
    """Kolmogorov-Smirnov distance to a CDF (callable) or to a second sample."""
    a = np.sort(np.asarray(sample_a, dtype=np.float64))
    n = len(a)
    if n == 0:
        raise ValueError("empty sample")
    if callable(reference):
        F = np.asarray(reference(a), dtype=np.float64)
        i = np.arange(1, n + 1)
        d = max(np.max(i / n - F), np.max(F - (i - 1) / n))
        return float(min(max(d, 0.0), 1.0))
    b = np.sort(np.asarray(reference, dtype=np.float64))
    if len(b) == 0:
        raise ValueError("empty reference sample")
    both = np.concatenate([a, b])
    fa = np.searchsorted(a, both, side="right") / n
    fb = np.searchsorted(b, both, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


@dataclass(frozen=True)
class MomentPoint:
    t: float
    mean_abs: float
    se: float


def moment_curve(ens: PathEnsemble, times: Sequence[float] | None = None) -> list[MomentPoint]:
    """``(t, mean |x|, standard error)`` at the requested recorded times."""
    ts = ens.times if times is None else times
    acc = ens.stats.abs_moments
    out = []
    for t in ts:
        j = ens.time_index(float(t))
        out.append(MomentPoint(float(ens.times[j]), float(acc.mean[j]), float(acc.standard_error[j])))
    return out


def second_moment(ens: PathEnsemble, t: float) -> tuple[float, float]:
    j = ens.time_index(t)
    acc = ens.stats.second
    return float(acc.mean[j]), float(acc.standard_error[j])


@dataclass
class SummaryStats:
    histogram: Histogram
    ks_vs_reference: float | None
    moment_curve: list[MomentPoint]
    clamp_fraction: float


def summarize(ens: PathEnsemble, reference: Callable | np.ndarray | None = None, bins: int = 200,
              range_: tuple[float, float] | None = None) -> SummaryStats:
    x = ens.marginal()
    ks = None if reference is None else ks_statistic(x, reference)
    return SummaryStats(histogram(x, bins, range_), ks, moment_curve(ens), ens.clamp_fraction)
