"""Command-line front end: ``fastslow {sigma,compare,moments,levy}``.

Exit codes: 0 success, 2 configuration error, 3 statistical quality flag,
4 too many failed realizations.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import PRESETS, RunConfig, load_config, with_overrides
from .covariance import CovarianceEstimate, estimate_constants, moment_estimator
from .ensemble import (CirModel, EnsembleConfig, FastSlowModel, SdeModel, histogram, ks_statistic, moment_curve,
                       run_ensemble, second_moment)
from .errors import ConfigError, DomainError, EnsembleFailure, InterpretationError
from .fast_dynamics import MapKind, orbit, sample_initial
from .functions import constant_h
from .levy import StableNoiseSpec, check_superdiffusive, stable_samples, tail_exponent
from .sde import Interpretation, SdeSpec, cir_cdf, cir_mean, stable_noise
from .streams import PURPOSE_INITIAL, PURPOSE_NOISE, Stream
from .transform import transformed_drift

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_QUALITY = 3
EXIT_FAILURES = 4

KS_C_ALPHA = 1.358  # two-sample critical constant at the 5% level


class CommandResult:
    def __init__(self, code: int, payload: dict):
        self.code = code
        self.payload = payload


def _out_dir(cfg: RunConfig, command: str) -> Path:
    return Path(cfg.out) if cfg.out else Path("fastslow-out") / command


def _record(cfg: RunConfig, command: str, results: dict) -> dict:
    return {"config": cfg.model_dump(mode="json"), "results": {"command": command, **results}}


def resolve_constants(cfg: RunConfig) -> tuple[float, float, CovarianceEstimate | None]:
    if not cfg.constants.estimate:
        return cfg.constants.sigma2, cfg.constants.f0_second_moment, None
    sc = cfg.sigma
    est = estimate_constants(cfg.fast_map(), cfg.observable.build(), sc.orbit_length, sc.lag_cutoff, cfg.seed,
                             sc.burn_in)
    if est.sigma2 <= 0:
        raise ConfigError("estimated sigma2 is not positive; cannot build the limit SDE")
    return est.sigma2, est.f0_second_moment, est


# --- sigma -----------------------------------------------------------------------


def cmd_sigma(cfg: RunConfig) -> CommandResult:
    """Estimate sigma^2 and int f0^2 dmu by Green-Kubo and cross-check them with block moments."""
    sc = cfg.sigma
    map_ = cfg.fast_map()
    obs = cfg.observable.build()
    gk = estimate_constants(map_, obs, sc.orbit_length, sc.lag_cutoff, cfg.seed, sc.burn_in)
    payload = {"green_kubo": gk.to_dict(), "seed": cfg.seed}
    flags = list(gk.quality_flags)
    if sc.moments:
        me = moment_estimator(map_, obs, sc.block_length, sc.blocks, cfg.seed, sc.burn_in, cfg.workers)
        payload["moments"] = me.to_dict()
        joint = math.hypot(gk.standard_error, me.standard_error)
        payload["z_difference"] = (gk.sigma2 - me.sigma2) / joint if joint > 0 else 0.0
        flags += list(me.quality_flags)
    payload.update(gk.to_dict())
    payload["quality_flags"] = sorted(set(flags))
    if cfg.out:
        io.write_json(Path(cfg.out) / "run.json", _record(cfg, "sigma", payload))
    return CommandResult(EXIT_QUALITY if flags else EXIT_OK, payload)


# --- compare ---------------------------------------------------------------------


def _ks_rows(samples: dict[str, np.ndarray], reference_cdf, map_source: str | None, sde_sources: list[str]) -> list[dict]:
    rows = []
    for name, x in samples.items():
        if reference_cdf is not None and name != "cir exact":
            rows.append({"a": name, "b": "cir law", "ks": ks_statistic(x, reference_cdf), "n_a": len(x), "n_b": None,
                         "critical_5pct": KS_C_ALPHA / math.sqrt(len(x))})
    pairs = []
    if map_source is not None:
        pairs += [(s, map_source) for s in sde_sources]
    pairs += [(sde_sources[i], sde_sources[j]) for i in range(len(sde_sources)) for j in range(i + 1, len(sde_sources))]
    for a, b in pairs:
        xa, xb = samples[a], samples[b]
        crit = KS_C_ALPHA * math.sqrt((len(xa) + len(xb)) / (len(xa) * len(xb)))
        ks = ks_statistic(xa, xb)
        rows.append({"a": a, "b": b, "ks": ks, "n_a": len(xa), "n_b": len(xb), "critical_5pct": crit,
                     "distinguishable": ks > crit})
    return rows


def cmd_compare(cfg: RunConfig) -> CommandResult:
    """Compare map ensembles, limiting SDEs and the exact CIR law at the final time."""
    cc = cfg.compare
    sigma2, m, est = resolve_constants(cfg)
    cir = cfg.cir_params(sigma2, m)
    T = cc.T
    map_ = cfg.fast_map()
    samples: dict[str, np.ndarray] = {}
    meta = []
    out = _out_dir(cfg, "compare")
    map_sources = []
    for eps in cc.epsilons:
        model = FastSlowModel(cfg.slow_system(eps), map_, cfg.slow.burn_in)
        ens = run_ensemble(EnsembleConfig(model, cfg.realizations, T, T, cfg.seed, cfg.workers, (0.0, T), False))
        samples[model.label] = ens.marginal()
        map_sources.append((eps, model.label))
        meta.append(ens.metadata())
        if cc.export_paths:
            sub = run_ensemble(EnsembleConfig(model, cc.export_paths, T, 0.01, cfg.seed, cfg.workers))
            io.write_paths(out / f"paths_eps{eps:g}.csv", sub)
    sde_sources = []
    sde_R = cfg.sde.realizations or cfg.realizations
    for name in cfg.sde.interpretations:
        spec = cfg.sde_spec(name, sigma2, m)
        model = SdeModel(spec, cfg.sde.dt)
        ens = run_ensemble(EnsembleConfig(model, sde_R, T, T, cfg.seed, cfg.workers, (0.0, T), False))
        samples[model.label] = ens.marginal()
        sde_sources.append(model.label)
        meta.append(ens.metadata())
    if cc.include_cir:
        R = max([cfg.realizations] + ([sde_R] if sde_sources else []))
        ens = run_ensemble(EnsembleConfig(CirModel(cir), R, T, T, cfg.seed, cfg.workers, (0.0, T), False))
        samples["cir exact"] = ens.marginal()
        meta.append(ens.metadata())
    if not samples:
        raise ConfigError("nothing to compare: no epsilons, interpretations or CIR reference")
    finite = np.concatenate([x[np.isfinite(x)] for x in samples.values()])
    lo = min(0.0, float(finite.min()))
    rng = (lo, 1.05 * float(finite.max()))
    densities = [(name, histogram(x, cc.bins, rng)) for name, x in samples.items()]
    smallest = min(map_sources)[1] if map_sources else None
    ks = _ks_rows(samples, cir_cdf(cir, T) if cc.include_cir else None, smallest, sde_sources)
    io.write_density(out / "density.csv", densities)
    results = {
        "constants": {"sigma2": sigma2, "f0_second_moment": m, "estimated": est.to_dict() if est else None},
        "cir": cir.to_dict(),
        "T": T,
        "ensembles": meta,
        "ks": ks,
    }
    io.write_json(out / "run.json", _record(cfg, "compare", results))
    return CommandResult(EXIT_OK, results)


# --- moments ---------------------------------------------------------------------


def cmd_moments(cfg: RunConfig) -> CommandResult:
    """Track E|x(t)| for map ensembles against the exact CIR mean."""
    mc = cfg.moments
    sigma2, m, est = resolve_constants(cfg)
    cir = cfg.cir_params(sigma2, m)
    map_ = cfg.fast_map()
    curves = []
    meta = []
    deviations = {}
    integer_times = [float(t) for t in range(int(math.floor(mc.T)) + 1)]
    for eps in mc.epsilons:
        model = FastSlowModel(cfg.slow_system(eps), map_, cfg.slow.burn_in)
        ens = run_ensemble(EnsembleConfig(model, cfg.realizations, mc.T, mc.grid_dt, cfg.seed, cfg.workers,
                                          None, False))
        curve = moment_curve(ens)
        curves.append((model.label, curve))
        meta.append(ens.metadata())
        pts = moment_curve(ens, integer_times)
        deviations[model.label] = {
            "sup_abs_deviation": max(abs(p.mean_abs - cir_mean(cir, p.t)) for p in pts),
            "second_moment_at_T": second_moment(ens, ens.times[-1]),
        }
    cir_check = None
    if mc.include_cir:
        ens = run_ensemble(EnsembleConfig(CirModel(cir), cfg.realizations, mc.T, mc.grid_dt, cfg.seed, cfg.workers,
                                          None, False))
        curve = moment_curve(ens)
        curves.append(("cir exact", curve))
        meta.append(ens.metadata())
        z = [abs(p.mean_abs - cir_mean(cir, p.t)) / p.se for p in moment_curve(ens, integer_times) if p.se > 0]
        cir_check = {"max_abs_z": max(z) if z else 0.0, "within_3se": all(v <= 3.0 for v in z)}
    grid = np.arange(int(round(mc.T / mc.grid_dt)) + 1) * mc.grid_dt
    from .ensemble import MomentPoint

    curves.append(("cir mean", [MomentPoint(float(t), cir_mean(cir, float(t)), 0.0) for t in grid]))
    out = _out_dir(cfg, "moments")
    io.write_moments(out / "moments.csv", curves)
    results = {
        "constants": {"sigma2": sigma2, "f0_second_moment": m, "estimated": est.to_dict() if est else None},
        "cir": cir.to_dict(),
        "ensembles": meta,
        "deviations": deviations,
        "cir_check": cir_check,
    }
    io.write_json(out / "run.json", _record(cfg, "moments", results))
    return CommandResult(EXIT_OK, results)


# --- levy ------------------------------------------------------------------------


def cmd_levy(cfg: RunConfig) -> CommandResult:
    """Superdiffusive regime: map ensemble, stable tail fits and the Marcus transform check."""
    lc = cfg.levy
    if lc is None:
        raise ConfigError("the levy command needs a 'levy' section")
    map_ = cfg.fast_map()
    if map_.kind is MapKind.DOUBLING or map_.gamma != lc.gamma:
        raise ConfigError(f"map gamma {map_.gamma} does not match the noise gamma {lc.gamma}")
    spec = cfg.levy_slow_system()
    obs = spec.f0
    if obs.centered:
        eta = sample_initial(map_, Stream(cfg.seed, 0, PURPOSE_INITIAL))
        pts = orbit(map_, eta, lc.centering_orbit, cfg.slow.burn_in).points
        mean = float(obs.evaluator(pts).mean())
        obs = obs.with_shift(obs.shift - mean)
        spec = type(spec)(spec.epsilon, spec.xi, obs, spec.h, spec.f, spec.scaling)
    try:
        check_superdiffusive(spec, map_)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    fit_kw = dict(x_min=lc.tail_x_min, x_max=lc.tail_x_max, q_min=lc.tail_q_min, q_max=lc.tail_q_max)
    fits = []
    densities = []
    meta = []
    model = FastSlowModel(spec, map_, cfg.slow.burn_in)
    ens = run_ensemble(EnsembleConfig(model, cfg.realizations, 1.0, 1.0, cfg.seed, cfg.workers, (0.0, 1.0), False))
    w = ens.marginal() - spec.xi
    fits.append(("superdiffusive", tail_exponent(w, **fit_kw)))
    densities.append(("superdiffusive", histogram(w, lc.bins)))
    meta.append(ens.metadata())
    noise = StableNoiseSpec(lc.gamma, lc.skew, lc.scale)
    y = stable_samples(noise, lc.stable_samples, Stream(cfg.seed, 0, PURPOSE_NOISE))
    fits.append(("stable", tail_exponent(y, **fit_kw)))
    densities.append(("stable", histogram(y, lc.bins)))
    results = {"shift": obs.shift, "epsilon": spec.epsilon, "expected_exponent": 1.0 / lc.gamma}
    if lc.marcus.enabled:
        ms = cfg.marcus_spec()
        R = lc.marcus.realizations or cfg.realizations
        times = (0.0, lc.marcus.T)
        mens = run_ensemble(EnsembleConfig(SdeModel(ms, lc.marcus.dt), R, lc.marcus.T, lc.marcus.T, cfg.seed,
                                           cfg.workers, times, True))
        t = ms.transform()
        Ft = transformed_drift(ms.drift, ms.h, t)
        additive = SdeSpec(Ft, constant_h(1.0), ms.sigma, Interpretation.ITO, 0.0, stable_noise(lc.gamma, lc.skew, lc.scale))
        aens = run_ensemble(EnsembleConfig(SdeModel(additive, lc.marcus.dt), R, lc.marcus.T, lc.marcus.T, cfg.seed,
                                           cfg.workers, times, True))
        ok = mens.ok & aens.ok
        z_marcus = mens.latent[ok, -1]
        x_marcus = mens.values[ok, -1]
        results["marcus"] = {
            "latent_equals_additive": bool(np.array_equal(z_marcus, aens.values[ok, -1])),
            "map_back_exact": bool(np.array_equal(x_marcus, t.r_inverse(z_marcus))),
            "max_abs_r_minus_z": float(np.max(np.abs(t.r(x_marcus) - z_marcus))) if ok.any() else 0.0,
            "failed": int((~mens.ok).sum()),
        }
        densities.append(("marcus", histogram(x_marcus, lc.bins)))
        meta.append(mens.metadata())
    out = _out_dir(cfg, "levy")
    io.write_density(out / "density.csv", densities)
    io.write_tail(out / "tail.csv", fits)
    results["tails"] = {src: f.to_dict() for src, f in fits}
    results["ensembles"] = meta
    io.write_json(out / "run.json", _record(cfg, "levy", results))
    return CommandResult(EXIT_OK, results)


COMMANDS = {"sigma": cmd_sigma, "compare": cmd_compare, "moments": cmd_moments, "levy": cmd_levy}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastslow", description="Fast-slow maps and their limiting SDEs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else name)
        p.add_argument("preset", nargs="?", help=f"built-in preset ({', '.join(PRESETS)}) or config path")
        p.add_argument("--config", help="config file (YAML or JSON, including a previous run.json) or preset name")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit); default 0")
        p.add_argument("--workers", type=int, help="worker threads; never changes the output")
        p.add_argument("--out", help="output directory")
        p.add_argument("--realizations", type=int, help="override the ensemble size")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        source = args.config or args.preset
        cfg = load_config(source) if source else RunConfig()
        cfg = with_overrides(cfg, seed=args.seed, workers=args.workers, out=args.out, realizations=args.realizations)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, InterpretationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EnsembleFailure as exc:
        print(f"realization failures: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(io.dumps(result.payload) if args.command == "sigma" else io.dumps({"exit": result.code, "out": str(
        _out_dir(cfg, args.command))}))
    return result.code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
