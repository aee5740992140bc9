from __future__ import annotations

import math

import numba as nb
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fastslow.ensemble import (CirModel, EnsembleConfig, FastSlowModel, MomentAccumulator, SdeModel, histogram,
                               ks_statistic, merge_pairwise, moment_curve, run_ensemble, second_moment,
                               single_realization, summarize)
from fastslow.errors import EnsembleFailure
from fastslow.fast_dynamics import modified_pomeau_manneville, sample_initial
from fastslow.functions import constant_coupling, constant_h, constant_observable, scalar_fn
from fastslow.sde import CirParams, Interpretation, SdeSpec, cir_cdf, cir_mean, cir_sde
from fastslow.slow_dynamics import SlowSystemSpec, evolve, paper_system
from fastslow.streams import PURPOSE_INITIAL, Stream

MPM = modified_pomeau_manneville(0.1)
PAPER = CirParams(0.085, 0.160, 0.383, 1.0)
finite = st.floats(-1e6, 1e6, allow_nan=False)


def _map_cfg(eps=0.4, R=300, workers=1, **kw):
    return EnsembleConfig(FastSlowModel(paper_system(eps), MPM, 1000), R, 2.0, 0.1, 5, workers, **kw)


def test_singleton_reproduces_evolve():
    cfg = _map_cfg(R=1)
    ens = run_ensemble(cfg)
    eta = sample_initial(MPM, Stream(5, 0, PURPOSE_INITIAL))
    path = evolve(paper_system(0.4), MPM, eta, 2.0, 0.1, burn_in=1000)
    assert np.array_equal(ens.values[0], path.values)


@pytest.mark.parametrize("model", ["map", "sde", "cir"])
def test_worker_hint_does_not_change_results(model):
    if model == "map":
        make = lambda w: _map_cfg(R=1500, workers=w)
    elif model == "sde":
        make = lambda w: EnsembleConfig(SdeModel(cir_sde(PAPER), 0.01), 1500, 2.0, 0.5, 3, w)
    else:
        make = lambda w: EnsembleConfig(CirModel(PAPER), 1500, 2.0, 0.5, 3, w)
    a, b = run_ensemble(make(1)), run_ensemble(make(8))
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.stats.abs_moments.mean, b.stats.abs_moments.mean)
    assert np.array_equal(a.stats.abs_moments.m2, b.stats.abs_moments.m2)


@pytest.mark.parametrize("index", [0, 7, 700])
def test_single_realization_in_isolation(index):
    for cfg in (_map_cfg(R=1000), EnsembleConfig(SdeModel(cir_sde(PAPER), 0.01), 1000, 1.0, 0.5, 2),
                EnsembleConfig(CirModel(PAPER), 1000, 3.0, 1.0, 2)):
        ens = run_ensemble(cfg)
        assert np.array_equal(single_realization(cfg, index), ens.values[index])


def test_streamed_statistics_match_stored_paths():
    a = run_ensemble(_map_cfg(R=700))
    b = run_ensemble(_map_cfg(R=700, store_paths=False))
    assert b.values is None
    assert np.array_equal(a.terminal, b.terminal)
    assert np.allclose(a.stats.abs_moments.mean, np.abs(a.values).mean(axis=0), rtol=1e-13)
    assert np.allclose(a.stats.moments.variance, a.values.var(axis=0, ddof=1), rtol=1e-10, atol=1e-15)
    with pytest.raises(ValueError):
        b.marginal(1.0)


def test_deterministic_ensemble_curve_equals_single_path():
    spec = SlowSystemSpec(0.4, 1.0, constant_observable(0.0, centered=False), constant_h(), constant_coupling(-0.2))
    ens = run_ensemble(EnsembleConfig(FastSlowModel(spec, MPM, 10), 200, 2.0, 0.5))
    path = evolve(spec, MPM, 0.1, 2.0, 0.5)
    curve = moment_curve(ens)
    # the ensemble mean of identical paths differs only by summation rounding
    assert [p.mean_abs for p in curve] == pytest.approx(np.abs(path.values).tolist(), rel=1e-12)
    assert all(p.se < 1e-14 for p in curve)


def test_cir_curve_matches_closed_form():
    ens = run_ensemble(EnsembleConfig(CirModel(PAPER), 100_000, 15.0, 1.0, store_paths=False))
    for p in moment_curve(ens):
        assert abs(p.mean_abs - cir_mean(PAPER, p.t)) <= 3 * p.se + 1e-15


def test_exact_sampler_ks_self_consistency():
    ens = run_ensemble(EnsembleConfig(CirModel(PAPER), 1_000_000, 10.0, times=(0.0, 10.0), store_paths=False))
    assert ks_statistic(ens.marginal(), cir_cdf(PAPER, 10.0)) <= 0.002


def test_second_moment_bounded_across_eps():
    vals = []
    for eps in (0.8, 0.4, 0.2):
        cfg = EnsembleConfig(FastSlowModel(paper_system(eps), MPM, 1000), 5000, 10.0, 10.0, 1, times=(0.0, 10.0),
                             store_paths=False)
        vals.append(second_moment(run_ensemble(cfg), 10.0))
    means = np.array([v[0] for v in vals])
    ses = np.array([v[1] for v in vals])
    assert np.all(np.isfinite(means))
    w = 1 / ses**2
    common = float((w * means).sum() / w.sum())
    assert np.all(np.abs(means - common) <= 3 * ses)


def test_failure_threshold():
    blow = scalar_fn(nb.njit(lambda x: math.inf), "inf")
    spec = SdeSpec(blow, constant_h(), 1.0, Interpretation.ITO, 0.0)
    with pytest.raises(EnsembleFailure) as err:
        run_ensemble(EnsembleConfig(SdeModel(spec, 0.01), 50, 0.1, 0.1))
    assert err.value.failed == 50 and err.value.total == 50
    ens = run_ensemble(EnsembleConfig(SdeModel(spec, 0.01), 50, 0.1, 0.1, allowed_failure=1.0))
    assert len(ens.errors) == 50 and not ens.ok.any()
    assert ens.metadata()["failed"] == 50


def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(CirModel(PAPER), 0, 1.0)
    with pytest.raises(ValueError):
        EnsembleConfig(CirModel(PAPER), 1, 1.0, master_seed=-1)
    with pytest.raises(ValueError):
        EnsembleConfig(CirModel(PAPER), 1, 1.0, times=(0.0, 2.0)).record_times()


@given(arrays(np.float64, st.integers(1, 300), elements=finite), st.integers(1, 50))
def test_histogram_conservation(x, bins):
    h = histogram(x, bins)
    assert np.all(h.masses >= 0)
    assert abs(h.masses.sum() - 1.0) < 1e-12
    assert h.edges[0] <= x.min() and h.edges[-1] >= x.max()


def test_histogram_range_expands():
    h = histogram(np.array([0.5, 2.0, 3.0]), 10, (1.0, 2.5))
    assert h.edges[0] == 0.5 and h.edges[-1] == 3.0
    assert histogram(np.array([1.0, 2.0]), 4).edges[0] == 0.0


@given(arrays(np.float64, st.integers(1, 80), elements=finite), arrays(np.float64, st.integers(1, 80), elements=finite))
def test_ks_properties(a, b):
    d = ks_statistic(a, b)
    assert 0.0 <= d <= 1.0
    assert d == ks_statistic(b, a)
    assert ks_statistic(a, a) == 0.0


def test_ks_examples():
    assert ks_statistic(np.array([0.0]), np.array([1.0])) == 1.0
    x = np.linspace(0.0005, 0.9995, 1000)
    assert ks_statistic(x, lambda v: np.clip(v, 0, 1)) <= 0.0006


@given(st.lists(arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)), elements=st.floats(-100, 100)),
                min_size=1, max_size=6))
def test_accumulator_merge_equals_direct(parts):
    accs = [MomentAccumulator.from_values(p, np.ones(len(p), bool)) for p in parts]
    merged = merge_pairwise(accs)
    allv = np.concatenate(parts)
    assert np.allclose(merged.mean, allv.mean(axis=0), atol=1e-9)
    assert np.allclose(merged.m2, ((allv - allv.mean(axis=0)) ** 2).sum(axis=0), atol=1e-6, rtol=1e-9)
    assert np.array_equal(merged.count, np.full(3, float(len(allv))))


def test_summarize():
    ens = run_ensemble(EnsembleConfig(CirModel(PAPER), 2000, 2.0, 1.0))
    s = summarize(ens, cir_cdf(PAPER, 2.0))
    assert 0.0 <= s.ks_vs_reference <= 1.0
    assert len(s.moment_curve) == 3
    assert s.clamp_fraction == 0.0
