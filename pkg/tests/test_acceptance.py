"""Acceptance criteria A1-A11 at their stated tolerances.

Each test prints one ``A<k> PASS|FAIL: ...`` line; the lines are repeated in
the terminal summary.  These runs are sized for a single core and take
roughly a quarter of an hour together.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from fastslow import cli
from fastslow.config import load_config
from fastslow.covariance import moment_estimator, estimate_constants
from fastslow.ensemble import (CirModel, EnsembleConfig, FastSlowModel, SdeModel, ks_statistic, moment_curve,
                               run_ensemble)
from fastslow.fast_dynamics import doubling, modified_pomeau_manneville, pomeau_manneville, sample_initial
from fastslow.functions import constant_h, identity, linear_h, power_h, quadratic_coupling, shifted, sign_observable
from fastslow.levy import StableNoiseSpec, birkhoff_terminal, marcus_jump, marcus_path, stable_samples, tail_exponent
from fastslow.sde import CirParams, Interpretation, SdeSpec, cir_cdf, cir_mean, integrate_path, stable_noise
from fastslow.slow_dynamics import estimate_averaged_drift, ldp_diagnostic_k2, paper_system
from fastslow.streams import PURPOSE_INITIAL, Stream
from fastslow.fast_dynamics import orbit

pytestmark = pytest.mark.slow

SIGMA2, M = 0.085, 0.319
MPM = modified_pomeau_manneville(0.1)
CIR = CirParams.from_constants(SIGMA2, M)
EPSILONS = (0.8, 0.4, 0.2)
REALIZATIONS = 100_000
# pilot run at repo creation: KS(eps=0.2, t=10) = 0.0060 with 20k realizations
A3_BOUND = 0.02
TIMES = tuple(float(t) for t in range(16))


@pytest.fixture(scope="module")
def map_ensembles():
    """The three square-root system ensembles shared by A3, A4 and A5."""
    out = {}
    elapsed = 0.0
    for eps in EPSILONS:
        t0 = time.perf_counter()
        cfg = EnsembleConfig(FastSlowModel(paper_system(eps), MPM, 10_000), REALIZATIONS, 15.0, master_seed=0,
                             times=TIMES, store_paths=True)
        out[eps] = run_ensemble(cfg)
        elapsed += time.perf_counter() - t0
    out["elapsed"] = elapsed
    return out


@pytest.fixture(scope="module")
def sigma_run():
    t0 = time.perf_counter()
    res = cli.cmd_sigma(load_config("paper-sec6"))
    return res, time.perf_counter() - t0


def test_a1_constants(sigma_run, acceptance_report):
    res, elapsed = sigma_run
    gk = res.payload["green_kubo"]
    ok = (abs(gk["sigma2"] - 0.085) <= 0.010 and abs(gk["f0_second_moment"] - 0.319) <= 0.008
          and elapsed <= 60.0 and res.code == 0)
    acceptance_report("A1", ok, f"sigma2={gk['sigma2']:.5f} (0.085+-0.010), int y^2={gk['f0_second_moment']:.5f} "
                                f"(0.319+-0.008), runtime {elapsed:.1f}s (<=60s)")
    assert ok


def test_a2_estimator_cross_check(sigma_run, acceptance_report):
    res, _ = sigma_run
    gk, me = res.payload["green_kubo"], res.payload["moments"]
    z6 = abs(gk["sigma2"] - me["sigma2"]) / math.hypot(gk["standard_error"], me["standard_error"])
    # doubling map: Lebesgue measure is invariant, so uniform starts need no burn-in
    gk_d = estimate_constants(doubling(), sign_observable(), 10_000_000, 32, seed=0, burn_in=0)
    me_d = moment_estimator(doubling(), sign_observable(), 1000, 400_000, seed=0, burn_in=0)
    zd = abs(gk_d.sigma2 - me_d.sigma2) / math.hypot(gk_d.standard_error, me_d.standard_error)
    ok = (z6 <= 3 and zd <= 3 and abs(gk_d.sigma2 - 1) <= 0.01 and abs(me_d.sigma2 - 1) <= 0.01)
    acceptance_report("A2", ok, f"MPM: GK {gk['sigma2']:.5f} vs moments {me['sigma2']:.5f} ({z6:.2f} SE); "
                                f"doubling/sign: GK {gk_d.sigma2:.4f}, moments {me_d.sigma2:.4f} ({zd:.2f} SE)")
    assert ok


def test_a3_weak_convergence(map_ensembles, acceptance_report):
    cdf = cir_cdf(CIR, 10.0)
    ks = [ks_statistic(map_ensembles[e].marginal(10.0), cdf) for e in EPSILONS]
    decreasing = ks[0] > ks[1] > ks[2]
    ok = decreasing and ks[2] < A3_BOUND and map_ensembles["elapsed"] <= 600
    acceptance_report("A3", ok, "KS at t=10 " + ", ".join(f"eps={e}: {k:.4f}" for e, k in zip(EPSILONS, ks))
                      + f"; bound {A3_BOUND}; ensembles took {map_ensembles['elapsed']:.0f}s on 1 worker")
    assert ok


def test_a4_interpretations(map_ensembles, acceptance_report):
    cfg = load_config("paper-fig2")
    target = map_ensembles[0.2].marginal(10.0)
    samples = {}
    for name in ("drift_corrected", "ito", "stratonovich"):
        spec = cfg.sde_spec(name, SIGMA2, M)
        ens = run_ensemble(EnsembleConfig(SdeModel(spec, 0.01), 1_000_000, 10.0, 10.0, 0, times=(0.0, 10.0),
                                          store_paths=False))
        samples[name] = ens.marginal()
    ks = {k: ks_statistic(v, target) for k, v in samples.items()}
    crit = 1.358 * math.sqrt(2 / 1_000_000)
    names = list(samples)
    pairs = {(a, b): ks_statistic(samples[a], samples[b]) for i, a in enumerate(names) for b in names[i + 1:]}
    best = min(ks, key=ks.get)
    ok = best == "drift_corrected" and sorted(ks.values())[0] < sorted(ks.values())[1] and all(
        v > crit for v in pairs.values())
    acceptance_report("A4", ok, "KS to eps=0.2 map: " + ", ".join(f"{k} {v:.4f}" for k, v in ks.items())
                      + "; pairwise " + ", ".join(f"{a}/{b} {v:.4f}" for (a, b), v in pairs.items())
                      + f" (5% critical {crit:.4f})")
    assert ok


def test_a5_moments(map_ensembles, acceptance_report):
    sup = {}
    for eps in EPSILONS:
        sup[eps] = max(abs(p.mean_abs - cir_mean(CIR, p.t)) for p in moment_curve(map_ensembles[eps], TIMES))
    cir = run_ensemble(EnsembleConfig(CirModel(CIR), REALIZATIONS, 15.0, master_seed=0, times=TIMES,
                                      store_paths=False))
    z = [abs(p.mean_abs - cir_mean(CIR, p.t)) / p.se for p in moment_curve(cir, TIMES) if p.se > 0]
    ok = sup[0.2] < sup[0.8] and max(z) <= 3.0
    acceptance_report("A5", ok, "sup|mean|x|-EX| " + ", ".join(f"eps={e}: {v:.4f}" for e, v in sup.items())
                      + f"; exact-sampler curve max |z| = {max(z):.2f} (<=3)")
    assert ok


def test_a6_transform_route(acceptance_report):
    spec = load_config("paper-fig2").sde_spec("marcus_via_transform", SIGMA2, M)
    ens = run_ensemble(EnsembleConfig(SdeModel(spec, 1e-3), 1_000_000, 10.0, 10.0, 0, times=(0.0, 10.0),
                                      store_paths=False))
    x = ens.marginal()
    ks = ks_statistic(x, cir_cdf(CIR, 10.0))
    ok = ks <= 0.01
    acceptance_report("A6", ok, f"KS(transform route, exact CIR) = {ks:.5f} (<=0.01) on {len(x)} paths, "
                                f"{len(ens.errors)} left r(domain)")
    assert ok


def test_a7_iid_reduction(acceptance_report):
    F = quadratic_coupling(0.375, -0.5).averaged(0.3)
    h = power_h(0.5)
    dc = SdeSpec(F, h, math.sqrt(0.3), Interpretation.DRIFT_CORRECTED, 1.0, sigma2=0.3, f0_second_moment=0.3)
    ito = SdeSpec(F, h, math.sqrt(0.3), Interpretation.ITO, 1.0)
    a = run_ensemble(EnsembleConfig(SdeModel(dc, 1e-3), 2000, 2.0, 0.01, 17))
    b = run_ensemble(EnsembleConfig(SdeModel(ito, 1e-3), 2000, 2.0, 0.01, 17))
    ok = np.array_equal(a.values, b.values)
    acceptance_report("A7", ok, f"drift-corrected vs Ito paths bit-identical on 2000 matched seeds: {ok}")
    assert ok


def test_a8_k2_decay(acceptance_report):
    drift = estimate_averaged_drift(quadratic_coupling(0.375, -0.5), MPM)
    n = 10_000
    means, ses = {}, {}
    for eps in (0.8, 0.4, 0.2, 0.1):
        spec = paper_system(eps)
        vals = np.array([ldp_diagnostic_k2(spec, MPM, sample_initial(MPM, Stream(0, i, PURPOSE_INITIAL)), 10.0,
                                           drift, 10_000) for i in range(n)])
        means[eps], ses[eps] = vals.mean(), vals.std(ddof=1) / math.sqrt(n)
    eps = list(means)
    monotone = all(means[b] <= means[a] + 2 * math.hypot(ses[a], ses[b]) for a, b in zip(eps, eps[1:]))
    ok = monotone and means[0.1] < 0.5 * means[0.8]
    acceptance_report("A8", ok, "mean sup|K2| " + ", ".join(f"eps={e}: {means[e]:.4f}+-{ses[e]:.4f}" for e in eps))
    assert ok


def test_a9_stable_limit(acceptance_report):
    spec = StableNoiseSpec(0.75)
    y = stable_samples(spec, 10_000_000, Stream(0, 0))
    fit_stable = tail_exponent(y, 10.0, 1000.0)
    pm = pomeau_manneville(0.75)
    # f0(y) = y - mean, with the mean taken from a long orbit, so f0(0) != 0
    mean = float(orbit(pm, 0.3, 10_000_000, 10_000).points.mean())
    w = birkhoff_terminal(pm, shifted(identity(), -mean), 100, 10_000_000, mode="consecutive", eta=0.3)
    fit_map = tail_exponent(w)
    ok_stable = abs(fit_stable.exponent - 4 / 3) <= 0.1
    ok_map = abs(fit_map.exponent - 4 / 3) <= 0.1
    acceptance_report("A9", ok_stable and ok_map,
                      f"stable sampler exponent {fit_stable.exponent:.3f} over [10, 1e3]; map Birkhoff (n=100) "
                      f"exponent {fit_map.exponent:.3f} over quantiles [{fit_map.x_min:.3f}, {fit_map.x_max:.3f}]"
                      f" (target 4/3 +- 0.1)")
    assert ok_stable and ok_map


def test_a10_marcus(acceptance_report):
    h = linear_h(1.0, 0.0)
    mar = SdeSpec(quadratic_coupling(0.0, 0.0).averaged(0.0), h, 1.0, Interpretation.MARCUS_VIA_TRANSFORM, 1.0,
                  stable_noise(0.75))
    t = mar.transform()
    errs = []
    for x_minus, jump in ((1.0, 0.8), (2.5, -1.7), (0.3, 3.1)):
        sol = integrate.solve_ivp(lambda s, y: [y[0]], (0.0, jump), [x_minus], rtol=1e-13, atol=1e-15)
        errs.append(abs(marcus_jump(t, x_minus, jump) / sol.y[0, -1] - 1.0))
    add = SdeSpec(quadratic_coupling(0.0, 0.0).averaged(0.0), constant_h(), 1.0, Interpretation.ITO, 0.0,
                  stable_noise(0.75))
    same = True
    dev = 0.0
    for i in range(200):
        x, z = marcus_path(mar, 1.0, 0.01, Stream(0, i))
        g = integrate_path(add, 1.0, 0.01, Stream(0, i))
        same &= np.array_equal(z.values, g.values) and np.array_equal(x.values, t.r_inverse(z.values))
        dev = max(dev, float(np.max(np.abs(t.r(x.values) - g.values))))
    ok = max(errs) <= 1e-8 and same
    acceptance_report("A10", ok, f"jump rule max rel err {max(errs):.1e} (<=1e-8); latent Z equals additive path "
                                 f"bit-exactly and X = r^-1(Z) on 200 paths: {same}; float max|r(X) - Z| = {dev:.1e}")
    assert ok


def test_a11_determinism(tmp_path, acceptance_report):
    outputs = {}
    for w in (1, 8):
        out = tmp_path / f"w{w}"
        codes = [
            cli.run(["compare", "paper-fig2", "--realizations", "3000", "--workers", str(w), "--out",
                     str(out / "compare")]),
            cli.run(["moments", "paper-fig3", "--realizations", "3000", "--workers", str(w), "--out",
                     str(out / "moments")]),
        ]
        assert codes == [0, 0]
        outputs[w] = {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*.csv"))}
    same = outputs[1] == outputs[8] and len(outputs[1]) == 2
    acceptance_report("A11", same, f"{len(outputs[1])} CSV files bit-identical for workers 1 and 8: {same}")
    assert same
