"""Limiting SDEs, their integrators and the exact Cox-Ingersoll-Ross law.

Interpretations
---------------
``ito``
    Euler-Maruyama for ``dX = F dt + sigma h(X) dW``.
``stratonovich``
    Heun predictor-corrector for ``dX = F dt + sigma h(X) o dW``.
``drift_corrected``
    Euler-Maruyama with the Ito-form drift ``F + h h' (sigma2 - m) / 2``
    built from the stored ``(sigma2, m)``.
``marcus_via_transform``
    Euler for ``dZ = sigma dW + Ft(Z) dt`` (or a stable driver ``dG``) with
    ``Z(0) = 0`` and ``Ft = (F/h) o r^-1``, mapped back through ``X = r^-1(Z)``.
    ``F`` is the Stratonovich (Brownian) or Marcus (stable) form drift.

Square-root multipliers use full truncation: drift and diffusion are evaluated
at ``max(X, lower)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import special

from .errors import InterpretationError
from .functions import Multiplier, ScalarFn, constant_h
from .levy import StableNoiseSpec, cms_variate
from .slow_dynamics import STATUS_NONFINITE, STATUS_OK, RescaledPath, make_grid, step_indices
from .streams import fill_normal, next_gamma, next_poisson, stream_state
from .transform import TransformSpec, build_transform, ito_form_drift, transformed_drift

MAX_DT = 0.01


class Interpretation(str, enum.Enum):
    ITO = "ito"
    STRATONOVICH = "stratonovich"
    DRIFT_CORRECTED = "drift_corrected"
    MARCUS_VIA_TRANSFORM = "marcus_via_transform"


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "brownian"
    stable: StableNoiseSpec | None = None

    def __post_init__(self):
        if self.kind not in ("brownian", "stable"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "stable" and self.stable is None:
            raise ValueError("stable noise needs a StableNoiseSpec")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.stable is not None:
            d.update(self.stable.to_dict())
        return d


BROWNIAN = NoiseSpec()


def stable_noise(gamma: float, skew: float = 1.0, scale: float = 1.0) -> NoiseSpec:
    return NoiseSpec("stable", StableNoiseSpec(gamma, skew, scale))


@dataclass(frozen=True)
class SdeSpec:
    """A scalar SDE ``dX = drift dt + sigma h(X) dN`` under one interpretation.

    ``drift`` is read in the form matching ``interpretation`` (see the module
    docstring).  ``sigma2``/``f0_second_moment`` are required by the
    drift-corrected interpretation.
    """

    drift: ScalarFn
    h: Multiplier = field(default_factory=constant_h)
    sigma: float = 1.0
    interpretation: Interpretation = Interpretation.ITO
    xi: float = 0.0
    noise: NoiseSpec = BROWNIAN
    sigma2: float | None = None
    f0_second_moment: float | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "interpretation", Interpretation(self.interpretation))
        if not (self.sigma >= 0.0):
            raise ValueError("sigma must be nonnegative")
        if self.interpretation is Interpretation.DRIFT_CORRECTED and (self.sigma2 is None or self.f0_second_moment is None):
            raise ValueError("the drift-corrected interpretation needs sigma2 and f0_second_moment")
        if self.noise.kind == "stable" and self.interpretation in (Interpretation.STRATONOVICH, Interpretation.DRIFT_CORRECTED):
            raise InterpretationError(
                f"{self.interpretation.value} is not defined for jump noise; use the Marcus interpretation")

    @property
    def diffusion(self) -> ScalarFn:
        return self.h.h

    def effective_drift(self) -> ScalarFn:
        """The drift actually stepped by the integrator (before any transform)."""
        if self.interpretation is Interpretation.DRIFT_CORRECTED:
            return ito_form_drift(self.drift, self.h, None, self.sigma2, self.f0_second_moment)
        return self.drift

    def transform(self) -> TransformSpec:
        return build_transform(self.h, xi=self.xi)

    def to_dict(self) -> dict:
        return {
            "drift": self.drift.label,
            "h": self.h.to_dict(),
            "sigma": self.sigma,
            "interpretation": self.interpretation.value,
            "xi": self.xi,
            "noise": self.noise.to_dict(),
            "sigma2": self.sigma2,
            "f0_second_moment": self.f0_second_moment,
            "label": self.label,
        }


# --- CIR ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CirParams:
    """``dX = sigma sqrt(X) dW + alpha (beta - X) dt`` with ``X(0) = xi``."""

    sigma2: float
    alpha: float
    beta: float
    xi: float

    def __post_init__(self):
        for name in ("sigma2", "alpha", "beta"):
            if not (getattr(self, name) > 0.0):
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_constants(cls, sigma2: float, f0_second_moment: float, xi: float = 1.0) -> "CirParams":
        """Parameters of the square-root test system: ``alpha = m/2``, ``beta = (1 + sigma2/alpha)/4``."""
        alpha = 0.5 * f0_second_moment
        return cls(float(sigma2), alpha, 0.25 * (1.0 + sigma2 / alpha), float(xi))

    @property
    def dof(self) -> float:
        return 4.0 * self.alpha * self.beta / self.sigma2

    def scale(self, t: float) -> float:
        return self.sigma2 / (4.0 * self.alpha) * (-math.expm1(-self.alpha * t))

    def noncentrality(self, t: float) -> float:
        return math.exp(-self.alpha * t) * self.xi / self.scale(t)

    def to_dict(self) -> dict:
        return {"sigma2": self.sigma2, "alpha": self.alpha, "beta": self.beta, "xi": self.xi}


def cir_mean(p: CirParams, t: float) -> float:
    e = math.exp(-p.alpha * t)
    return p.xi * e + p.beta * (1.0 - e)


def cir_variance(p: CirParams, t: float) -> float:
    e = math.exp(-p.alpha * t)
    return p.xi * p.sigma2 / p.alpha * (e - e * e) + p.beta * p.sigma2 / (2.0 * p.alpha) * (1.0 - e) ** 2


@nb.njit(nogil=True)
def ncx2_variate(st, k, lam):
    j = next_poisson(st, 0.5 * lam) if lam > 0.0 else 0
    return 2.0 * next_gamma(st, 0.5 * k + j)


def noncentral_chisq_sample(k: float, lam: float, rng_stream) -> float:
    """Poisson mixture of central chi-squares: ``J ~ Poisson(lam/2)``, ``Gamma((k + 2J)/2, 2)``."""
    if not (k > 0.0) or not (lam >= 0.0):
        raise ValueError("need k > 0 and lambda >= 0")
    return float(ncx2_variate(stream_state(rng_stream), float(k), float(lam)))


def cir_exact_sample(p: CirParams, t: float, rng_stream) -> float:
    """``X(t) = c(t) H`` with ``H`` noncentral chi-square."""
    if not (t > 0.0):
        raise ValueError("t must be positive")
    return p.scale(t) * noncentral_chisq_sample(p.dof, p.noncentrality(t), rng_stream)


def ncx2_cdf(x, k: float, lam: float):
    """Noncentral chi-square CDF as a Poisson-weighted sum of regularized gamma functions."""
    x = np.asarray(x, dtype=np.float64)
    half = 0.5 * lam
    jmax = int(half + 12.0 * math.sqrt(half + 1.0) + 30.0)
    j = np.arange(jmax + 1)
    logw = -half + j * (math.log(half) if half > 0 else 0.0) - special.gammaln(j + 1.0)
    if half == 0:
        logw = np.where(j == 0, 0.0, -np.inf)
    w = np.exp(logw)
    xs = np.clip(x, 0.0, None)[..., None]
    return np.sum(w * special.gammainc(0.5 * k + j, 0.5 * xs), axis=-1)


def cir_cdf(p: CirParams, t: float):
    """CDF of ``X(t)`` as a callable."""
    c = p.scale(t)
    k, lam = p.dof, p.noncentrality(t)
    return lambda x: ncx2_cdf(np.asarray(x, dtype=np.float64) / c, k, lam)


def cir_sde(p: CirParams, interpretation: Interpretation = Interpretation.ITO) -> SdeSpec:
    """The CIR process as an Ito SDE with ``h = sqrt``."""
    from .functions import _affine_drift, power_h, scalar_fn

    drift = scalar_fn(_affine_drift(p.alpha * p.beta, -p.alpha), "alpha (beta - x)")
    return SdeSpec(drift, power_h(0.5), math.sqrt(p.sigma2), interpretation, p.xi, label="cir")


# --- kernels -------------------------------------------------------------------

SCHEME_EULER = 0
SCHEME_HEUN = 1

_NOISE_BUF = 1024


@nb.njit(nogil=True)
def fill_increments(st, stable, alpha, skew, scale, sqdt, dtg, buf):
    """Next block of driver increments."""
    if stable:
        for i in range(buf.shape[0]):
            buf[i] = dtg * scale * cms_variate(st, alpha, skew)
    else:
        fill_normal(st, buf)
        for i in range(buf.shape[0]):
            buf[i] *= sqdt


@nb.njit(nogil=True)
def _step(scheme, F, h, lower, sigma, dt, x, dw):
    xe = x if x >= lower else lower
    a = F(xe)
    b = h(xe)
    if scheme == SCHEME_EULER:
        return x + a * dt + sigma * b * dw
    xp = x + a * dt + sigma * b * dw
    xpe = xp if xp >= lower else lower
    return x + 0.5 * (a + F(xpe)) * dt + 0.5 * sigma * (b + h(xpe)) * dw


@nb.njit(nogil=True)
def sde_kernel(scheme, F, h, lower, sigma, x0, dt, idx, st, stable, alpha, skew, scale, gamma,
               rinv, map_back, out, latent):
    """Integrate and record at step counts ``idx`` (sorted).  Returns status.

    Gaussian increments are drawn in blocks, so the stream is left past the
    last increment used; every path owns its stream.

    With ``map_back`` the integrated variable is ``Z`` and ``out`` receives
    ``rinv(Z)`` while ``latent`` receives ``Z``.
    """
    m = idx.shape[0]
    sqdt = math.sqrt(dt)
    dtg = dt**gamma
    total = idx[m - 1]
    buf = np.empty(min(_NOISE_BUF, max(total, 1)))
    j = buf.shape[0]
    x = x0
    k = 0
    n = 0
    while k < m:
        while k < m and idx[k] == n:
            latent[k] = x
            out[k] = rinv(x) if map_back else x
            k += 1
        if k == m:
            break
        if j == buf.shape[0]:
            fill_increments(st, stable, alpha, skew, scale, sqdt, dtg, buf)
            j = 0
        x = _step(scheme, F, h, lower, sigma, dt, x, buf[j])
        j += 1
        if not math.isfinite(x):
            while k < m:
                out[k] = np.nan
                latent[k] = np.nan
                k += 1
            return STATUS_NONFINITE
        n += 1
    return STATUS_OK


@nb.njit(nogil=True)
def increments_kernel(scheme, F, h, lower, sigma, x0, dt, dws, out):
    x = x0
    out[0] = x
    for i in range(dws.shape[0]):
        x = _step(scheme, F, h, lower, sigma, dt, x, dws[i])
        out[i + 1] = x


@nb.njit(nogil=True)
def _identity(z):
    return z


# --- public API ----------------------------------------------------------------


@dataclass(frozen=True)
class PreparedSde:
    """Everything a kernel needs, resolved once per spec."""

    scheme: int
    F: object
    h: object
    lower: float
    sigma: float
    x0: float
    stable: bool
    alpha: float
    skew: float
    scale: float
    gamma: float
    rinv: object
    map_back: bool
    transform: TransformSpec | None


def prepare(spec: SdeSpec) -> PreparedSde:
    stable = spec.noise.kind == "stable"
    ns = spec.noise.stable
    alpha, skew, scale, gamma = (ns.exponent, ns.skew, ns.scale, ns.gamma) if stable else (2.0, 0.0, 1.0, 0.5)
    if spec.interpretation is Interpretation.MARCUS_VIA_TRANSFORM:
        t = spec.transform()
        Ft = transformed_drift(spec.drift, spec.h, t)
        if Ft.kernel is None or t.r_inverse.kernel is None:
            raise NotImplementedError("compiled integration needs a closed-form transform and drift")
        one = constant_h(1.0).kernels[0]
        return PreparedSde(SCHEME_EULER, Ft.kernel, one, -math.inf, spec.sigma, 0.0, stable, alpha, skew, scale,
                           gamma, t.r_inverse.kernel, True, t)
    F = spec.effective_drift()
    if F.kernel is None:
        raise NotImplementedError("compiled integration needs a compiled drift")
    scheme = SCHEME_HEUN if spec.interpretation is Interpretation.STRATONOVICH else SCHEME_EULER
    return PreparedSde(scheme, F.kernel, spec.h.kernels[0], float(spec.h.lower), spec.sigma, spec.xi, stable,
                       alpha, skew, scale, gamma, _identity, False, None)


def run_prepared(p: PreparedSde, dt: float, idx: np.ndarray, st: np.ndarray, out: np.ndarray, latent: np.ndarray) -> int:
    return sde_kernel(p.scheme, p.F, p.h, p.lower, p.sigma, p.x0, dt, idx, st, p.stable, p.alpha, p.skew,
                      p.scale, p.gamma, p.rinv, p.map_back, out, latent)


def integrate_path(spec: SdeSpec, T: float, dt: float, rng_stream, grid_dt: float | None = None,
                   return_latent: bool = False):
    """Sample path on ``0, grid_dt, ..., T`` (``grid_dt`` defaults to ``dt``).

    With ``return_latent`` the transform route also returns the ``Z`` path.
    """
    if not (0.0 < dt <= MAX_DT):
        raise ValueError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    grid = make_grid(T, dt if grid_dt is None else grid_dt)
    idx = step_indices(grid, 1.0 / dt)
    p = prepare(spec)
    out = np.empty(len(grid))
    latent = np.empty(len(grid))
    status = run_prepared(p, dt, idx, stream_state(rng_stream), out, latent)
    path = RescaledPath(grid, out, 0.0, status=int(status))
    if return_latent:
        return path, RescaledPath(grid, latent, 0.0, status=int(status))
    return path


def integrate_increments(spec: SdeSpec, increments: np.ndarray, dt: float) -> np.ndarray:
    """Values after each prescribed driver increment (no step-size limit).

    The transform interpretation returns ``r^-1(Z)``.
    """
    p = prepare(spec)
    dws = np.ascontiguousarray(increments, dtype=np.float64)
    out = np.empty(len(dws) + 1)
    increments_kernel(p.scheme, p.F, p.h, p.lower, p.sigma, p.x0, float(dt), dws, out)
    if p.map_back:
        return p.transform.r_inverse(out)
    return out
