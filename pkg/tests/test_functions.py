from __future__ import annotations

import math

import numba as nb
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastslow.errors import DomainError
from fastslow.functions import (ScalarFn, constant_coupling, constant_h, constant_observable, custom_h,
                                identity, linear_h, power_h, quadratic_coupling, scalar_fn, shifted,
                                sign_observable)

xs = st.floats(0.01, 50.0)


def test_observables():
    assert identity().value_at(0.3) == 0.3
    s = sign_observable()
    assert s.value_at(0.49) == -1.0 and s.value_at(0.5) == 1.0
    assert constant_observable(2.5).value_at(0.1) == 2.5
    assert shifted(identity(), 0.2).value_at(0.3) == pytest.approx(0.5)


def test_scalar_fn_scalar_and_array():
    f = scalar_fn(nb.njit(lambda x: 2.0 * x), "double")
    assert f(1.5) == 3.0
    assert np.array_equal(f(np.array([[1.0, 2.0]])), np.array([[2.0, 4.0]]))
    g = ScalarFn(py=math.exp)
    assert g(np.zeros(3)).tolist() == [1.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        ScalarFn()


def test_couplings_and_averages():
    q = quadratic_coupling(0.375, -0.5)
    assert q(1.0, 0.5) == pytest.approx(-0.125 * 0.25)
    F = q.averaged(0.319)
    assert F(1.0) == pytest.approx(0.5 * (0.75 - 1.0) * 0.319)
    assert constant_coupling(2.0).averaged()(7.0) == 2.0
    with pytest.raises(ValueError):
        q.averaged()


@given(xs)
def test_power_half_kernels(x):
    h = power_h(0.5)
    hk, hpk, hhk = h.kernels
    assert hk(x) == pytest.approx(math.sqrt(x))
    assert hpk(x) == pytest.approx(0.5 / math.sqrt(x))
    assert hhk(x) == 0.5


@given(xs, st.floats(-3, 3), st.floats(0.1, 3))
def test_hh_prime_is_product(x, b, a):
    for h in (linear_h(a, b), power_h(1.5), constant_h(2.0)):
        hk, hpk, hhk = h.kernels
        assert hhk(x) == pytest.approx(hk(x) * hpk(x), rel=1e-12, abs=1e-15)


def test_multiplier_domain():
    assert power_h(0.5).lower == 0.0
    assert power_h(2.0).lower == -math.inf
    with pytest.raises(DomainError):
        power_h(0.5)(-1.0)
    with pytest.raises(ValueError):
        linear_h(0.0, 1.0)


def test_custom_multiplier():
    h = custom_h(lambda x: 1.0 + x * x, lambda x: 2.0 * x)
    assert h.hh_prime(2.0) == pytest.approx(5.0 * 4.0)
