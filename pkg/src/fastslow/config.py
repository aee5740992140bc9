"""Run configuration: strict schema, presets and translation into library objects.

A configuration is a YAML or JSON document.  Unknown keys anywhere are
errors.  A ``run.json`` written by the CLI is itself a valid configuration:
its ``config`` member is used and ``results`` is ignored.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .fast_dynamics import FastMapSpec
from .functions import Coupling, Multiplier, ObservableSpec
from .sde import CirParams, Interpretation, SdeSpec, stable_noise
from .slow_dynamics import DIFFUSIVE, SlowSystemSpec, superdiffusive
from .transform import strat_correction_drift

PRESETS = ("paper-sec6", "paper-fig1", "paper-fig2", "paper-fig3", "levy-sec5")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MapConfig(_Strict):
    kind: Literal["pomeau_manneville", "modified_pomeau_manneville", "doubling"] = "modified_pomeau_manneville"
    gamma: float = 0.1

    def build(self) -> FastMapSpec:
        return FastMapSpec(self.kind, self.gamma if self.kind != "doubling" else 0.0)


class ObservableConfig(_Strict):
    kind: Literal["identity", "sign", "constant"] = "identity"
    params: list[float] = Field(default_factory=list)
    centered: bool = True
    shift: float = 0.0

    def build(self) -> ObservableSpec:
        if self.kind == "constant" and len(self.params) != 1:
            raise ConfigError("a constant observable needs exactly one parameter")
        if self.kind == "sign" and len(self.params) > 1:
            raise ConfigError("a sign observable takes at most one parameter (the threshold)")
        return ObservableSpec(self.kind, tuple(self.params), self.centered, self.shift)


class MultiplierConfig(_Strict):
    kind: Literal["constant", "power", "linear"] = "constant"
    params: list[float] = Field(default_factory=lambda: [1.0])

    def build(self) -> Multiplier:
        need = {"constant": 1, "power": 1, "linear": 2}[self.kind]
        if len(self.params) != need:
            raise ConfigError(f"multiplier {self.kind} needs {need} parameter(s)")
        return Multiplier(self.kind, tuple(float(p) for p in self.params))


class CouplingConfig(_Strict):
    kind: Literal["zero", "constant", "quadratic"] = "zero"
    params: list[float] = Field(default_factory=list)

    def build(self) -> Coupling:
        need = {"zero": 0, "constant": 1, "quadratic": 2}[self.kind]
        if len(self.params) != need:
            raise ConfigError(f"coupling {self.kind} needs {need} parameter(s)")
        return Coupling(self.kind, tuple(float(p) for p in self.params))


class SlowConfig(_Strict):
    xi: float = 1.0
    h: MultiplierConfig = Field(default_factory=lambda: MultiplierConfig(kind="power", params=[0.5]))
    f: CouplingConfig = Field(default_factory=lambda: CouplingConfig(kind="quadratic", params=[0.375, -0.5]))
    burn_in: int = Field(10_000, ge=0)


class SigmaConfig(_Strict):
    orbit_length: int = Field(10_000_000, ge=1)
    lag_cutoff: int = Field(1000, ge=1)
    burn_in: int = Field(10_000, ge=0)
    moments: bool = True
    block_length: int = Field(100_000, ge=1)
    blocks: int = Field(1000, ge=2)


class ConstantsConfig(_Strict):
    """Limit constants used to build the SDEs and the CIR reference.

    ``y2_moment`` is ``int y**2 dmu`` entering the averaged quadratic coupling;
    it defaults to ``f0_second_moment``.
    """

    estimate: bool = False
    sigma2: float = 0.085
    f0_second_moment: float = 0.319
    y2_moment: Optional[float] = None


class SdeConfig(_Strict):
    interpretations: list[Literal["drift_corrected", "ito", "stratonovich", "marcus_via_transform"]] = Field(
        default_factory=list)
    dt: float = Field(0.01, gt=0.0, le=0.01)
    realizations: Optional[int] = Field(None, ge=1)


class CompareConfig(_Strict):
    epsilons: list[float] = Field(default_factory=lambda: [0.8, 0.4, 0.2])
    T: float = Field(10.0, gt=0.0)
    include_cir: bool = True
    bins: int = Field(200, ge=1)
    export_paths: int = Field(0, ge=0)


class MomentsConfig(_Strict):
    epsilons: list[float] = Field(default_factory=lambda: [0.8, 0.4, 0.2])
    T: float = Field(15.0, gt=0.0)
    grid_dt: float = Field(0.01, gt=0.0)
    include_cir: bool = True


class MarcusConfig(_Strict):
    enabled: bool = True
    xi: float = 1.0
    h: MultiplierConfig = Field(default_factory=lambda: MultiplierConfig(kind="linear", params=[1.0, 0.0]))
    f: CouplingConfig = Field(default_factory=CouplingConfig)
    T: float = Field(1.0, gt=0.0)
    dt: float = Field(0.01, gt=0.0, le=0.01)
    realizations: Optional[int] = Field(None, ge=1)


class LevyConfig(_Strict):
    gamma: float = 0.75
    skew: float = 1.0
    scale: float = 1.0
    epsilon: float = Field(0.001, gt=0.0, le=1.0)
    xi: float = 0.0
    h: MultiplierConfig = Field(default_factory=MultiplierConfig)
    f: CouplingConfig = Field(default_factory=CouplingConfig)
    centering_orbit: int = Field(10_000_000, ge=1000)
    bins: int = Field(200, ge=1)
    tail_x_min: Optional[float] = None
    tail_x_max: Optional[float] = None
    tail_q_min: float = 0.9
    tail_q_max: float = 0.9999
    stable_samples: int = Field(1_000_000, ge=10)
    marcus: MarcusConfig = Field(default_factory=MarcusConfig)

    @field_validator("gamma")
    @classmethod
    def _gamma_range(cls, v: float) -> float:
        if not (0.5 < v < 1.0):
            raise ValueError("levy gamma must lie in (1/2, 1)")
        return v


class RunConfig(_Strict):
    name: str = "custom"
    seed: int = Field(0, ge=0, lt=2**64)
    workers: int = Field(1, ge=1)
    realizations: int = Field(10_000, ge=1)
    out: Optional[str] = None
    map: MapConfig = Field(default_factory=MapConfig)
    observable: ObservableConfig = Field(default_factory=ObservableConfig)
    slow: SlowConfig = Field(default_factory=SlowConfig)
    constants: ConstantsConfig = Field(default_factory=ConstantsConfig)
    sigma: SigmaConfig = Field(default_factory=SigmaConfig)
    sde: SdeConfig = Field(default_factory=SdeConfig)
    compare: CompareConfig = Field(default_factory=CompareConfig)
    moments: MomentsConfig = Field(default_factory=MomentsConfig)
    levy: Optional[LevyConfig] = None

    @model_validator(mode="after")
    def _epsilons(self):
        for eps in list(self.compare.epsilons) + list(self.moments.epsilons):
            if not (0.0 < eps <= 1.0):
                raise ValueError(f"epsilon {eps} must lie in (0, 1]")
        return self

    # --- translation -------------------------------------------------------------

    def fast_map(self) -> FastMapSpec:
        return self.map.build()

    def slow_system(self, eps: float) -> SlowSystemSpec:
        return SlowSystemSpec(eps, self.slow.xi, self.observable.build(), self.slow.h.build(), self.slow.f.build(),
                              DIFFUSIVE)

    def y2_moment(self, m: float) -> float:
        return m if self.constants.y2_moment is None else self.constants.y2_moment

    def cir_params(self, sigma2: float, m: float) -> CirParams:
        return CirParams.from_constants(sigma2, m, self.slow.xi)

    def sde_spec(self, interpretation: str, sigma2: float, m: float) -> SdeSpec:
        h = self.slow.h.build()
        F = self.slow.f.build().averaged(self.y2_moment(m))
        sigma = math.sqrt(sigma2)
        xi = self.slow.xi
        if interpretation == "drift_corrected":
            return SdeSpec(F, h, sigma, Interpretation.DRIFT_CORRECTED, xi, sigma2=sigma2, f0_second_moment=m,
                           label="drift_corrected")
        if interpretation == "ito":
            return SdeSpec(F, h, sigma, Interpretation.ITO, xi, label="ito")
        if interpretation == "stratonovich":
            return SdeSpec(F, h, sigma, Interpretation.STRATONOVICH, xi, label="stratonovich")
        if interpretation == "marcus_via_transform":
            Fs = strat_correction_drift(F, h, None, m)
            return SdeSpec(Fs, h, sigma, Interpretation.MARCUS_VIA_TRANSFORM, xi, label="marcus_via_transform")
        raise ConfigError(f"unknown interpretation {interpretation!r}")

    def levy_slow_system(self) -> SlowSystemSpec:
        lc = self.levy
        return SlowSystemSpec(lc.epsilon, lc.xi, self.observable.build(), lc.h.build(), lc.f.build(),
                              superdiffusive(lc.gamma))

    def marcus_spec(self) -> SdeSpec:
        lc = self.levy
        mc = lc.marcus
        F = mc.f.build().averaged(self.constants.f0_second_moment)
        return SdeSpec(F, mc.h.build(), 1.0, Interpretation.MARCUS_VIA_TRANSFORM, mc.xi,
                       stable_noise(lc.gamma, lc.skew, lc.scale), label="marcus")


# --- loading -----------------------------------------------------------------------


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("fastslow.presets").joinpath(f"{name}.yaml").read_text()


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("a configuration must be a mapping")
    if set(doc) == {"config", "results"}:
        doc = doc["config"]
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(source: str | Path) -> RunConfig:
    """Preset name, or path to a YAML/JSON file."""
    text = None
    s = str(source)
    if s in PRESETS:
        text = preset_text(s)
    else:
        p = Path(s)
        if not p.exists():
            raise ConfigError(f"no such config file or preset: {s}")
        text = p.read_text()
    try:
        doc = json.loads(text) if s.endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {s}: {exc}") from exc
    return parse_config(doc)


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Replace top-level fields; an explicit ``realizations`` also resets every per-section ensemble size."""
    data = cfg.model_dump()
    for k, v in overrides.items():
        if v is not None:
            data[k] = v
    if overrides.get("realizations") is not None:
        data["sde"]["realizations"] = None
        if data.get("levy"):
            data["levy"]["marcus"]["realizations"] = None
    return parse_config(data)
