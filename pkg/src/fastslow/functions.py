"""Scalar building blocks: observables f0(y), couplings f(x, y, eps), multipliers h(x).

Every building block carries a numba kernel so that orbit and path loops can
call it without returning to Python.  Kernels are created once per parameter
set and cached, because each new kernel costs a compilation.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numba as nb
import numpy as np
from numba.extending import is_jitted

from .errors import DomainError

__all__ = [
    "ScalarFn",
    "jit_scalar",
    "ObservableSpec",
    "identity",
    "sign_observable",
    "constant_observable",
    "shifted",
    "custom_observable",
    "Coupling",
    "zero_coupling",
    "constant_coupling",
    "quadratic_coupling",
    "custom_coupling",
    "Multiplier",
    "constant_h",
    "power_h",
    "linear_h",
    "custom_h",
]


def jit_scalar(fn: Callable) -> Callable:
    if is_jitted(fn):
        return fn
    return nb.njit(nogil=True)(fn)


@nb.njit(nogil=True)
def _apply1(fn, xs, out):
    for i in range(xs.shape[0]):
        out[i] = fn(xs[i])


class ScalarFn:
    """A real function of one variable with an optional compiled kernel.

    Calling it accepts scalars and arrays.  ``kernel`` is ``None`` for
    functions that only exist in Python (numeric transforms).
    """

    def __init__(self, py: Callable | None = None, kernel: Callable | None = None, label: str = ""):
        if py is None and kernel is None:
            raise ValueError("need a Python function or a kernel")
        self.kernel = kernel
        self.py = py if py is not None else kernel
        self.label = label

    def __call__(self, x):
        if np.ndim(x) == 0:
            return float(self.py(float(x)))
        xs = np.ascontiguousarray(x, dtype=np.float64)
        flat = xs.reshape(-1)
        out = np.empty_like(flat)
        if self.kernel is not None:
            _apply1(self.kernel, flat, out)
        else:
            for i, v in enumerate(flat):
                out[i] = self.py(float(v))
        return out.reshape(xs.shape)

    def __repr__(self) -> str:
        return f"ScalarFn({self.label or 'custom'})"


def scalar_fn(kernel, label: str = "") -> ScalarFn:
    return ScalarFn(kernel=kernel, label=label)


# --- observables -------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _identity_kernel():
    @nb.njit(nogil=True)
    def f(y):
        return y

    return f


@functools.lru_cache(maxsize=None)
def _sign_kernel(threshold: float):
    @nb.njit(nogil=True)
    def f(y):
        return -1.0 if y < threshold else 1.0

    return f


@functools.lru_cache(maxsize=None)
def _constant_kernel(c: float):
    @nb.njit(nogil=True)
    def f(y):
        return c

    return f


@functools.lru_cache(maxsize=None)
def _shifted_kernel(base, c: float):
    @nb.njit(nogil=True)
    def f(y):
        return base(y) + c

    return f


@dataclass(frozen=True)
class ObservableSpec:
    """An observable ``f0`` on the fast attractor.

    ``centered`` asks estimators to subtract the empirical mean along the
    orbit before use.  ``shift`` is added to the base evaluator, which is how
    a mean-zero version of a non-centered observable is built for path loops
    (see :meth:`with_shift`).
    """

    kind: str
    params: tuple = ()
    centered: bool = True
    shift: float = 0.0
    custom: Callable | None = field(default=None, compare=False)

    def _base_kernel(self):
        if self.kind == "identity":
            return _identity_kernel()
        if self.kind == "sign":
            return _sign_kernel(float(self.params[0]) if self.params else 0.5)
        if self.kind == "constant":
            return _constant_kernel(float(self.params[0]))
        if self.kind == "custom":
            if self.custom is None:
                raise ValueError("custom observable needs a function")
            return jit_scalar(self.custom)
        raise ValueError(f"unknown observable kind {self.kind!r}")

    @property
    def kernel(self):
        base = self._base_kernel()
        if self.shift == 0.0:
            return base
        return _shifted_kernel(base, float(self.shift))

    @property
    def evaluator(self) -> ScalarFn:
        return scalar_fn(self.kernel, self.kind)

    def __call__(self, y):
        return self.evaluator(y)

    def with_shift(self, shift: float) -> "ObservableSpec":
        return ObservableSpec(self.kind, self.params, self.centered, float(shift), self.custom)

    def value_at(self, y: float) -> float:
        return float(self.kernel(float(y)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "centered": self.centered, "shift": self.shift}


def identity(centered: bool = True) -> ObservableSpec:
    return ObservableSpec("identity", (), centered)


def sign_observable(threshold: float = 0.5, centered: bool = True) -> ObservableSpec:
    """-1 below ``threshold`` and +1 from ``threshold`` on."""
    return ObservableSpec("sign", (float(threshold),), centered)


def constant_observable(c: float, centered: bool = True) -> ObservableSpec:
    return ObservableSpec("constant", (float(c),), centered)


def shifted(obs: ObservableSpec, c: float) -> ObservableSpec:
    """``y -> obs(y) + c``."""
    return obs.with_shift(obs.shift + float(c))


def custom_observable(fn: Callable, centered: bool = True) -> ObservableSpec:
    return ObservableSpec("custom", (), centered, custom=fn)


# --- couplings ---------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _zero_coupling():
    @nb.njit(nogil=True)
    def f(x, y, eps):
        return 0.0

    return f


@functools.lru_cache(maxsize=None)
def _constant_coupling(c: float):
    @nb.njit(nogil=True)
    def f(x, y, eps):
        return c

    return f


@functools.lru_cache(maxsize=None)
def _quadratic_coupling(a: float, b: float):
    @nb.njit(nogil=True)
    def f(x, y, eps):
        return (a + b * x) * y * y

    return f


@functools.lru_cache(maxsize=None)
def _affine_drift(a: float, b: float):
    @nb.njit(nogil=True)
    def F(x):
        return a + b * x

    return F


@dataclass(frozen=True)
class Coupling:
    """The order-``eps**2`` term ``f(x, y, eps)`` of the slow recursion.

    Built-in kinds are ``zero``, ``constant`` (``f = c``) and ``quadratic``
    (``f = (a + b x) y**2``).  Their averaged drift ``F(x) = int f(x, y, 0) dmu``
    is available in closed form given the second moment of ``y``.
    """

    kind: str
    params: tuple = ()
    custom: Callable | None = field(default=None, compare=False)

    @property
    def kernel(self):
        if self.kind == "zero":
            return _zero_coupling()
        if self.kind == "constant":
            return _constant_coupling(float(self.params[0]))
        if self.kind == "quadratic":
            return _quadratic_coupling(float(self.params[0]), float(self.params[1]))
        if self.kind == "custom":
            if self.custom is None:
                raise ValueError("custom coupling needs a function")
            return jit_scalar(self.custom)
        raise ValueError(f"unknown coupling kind {self.kind!r}")

    def __call__(self, x: float, y: float, eps: float = 0.0) -> float:
        return float(self.kernel(float(x), float(y), float(eps)))

    @property
    def depends_on_y(self) -> bool:
        return self.kind in ("quadratic", "custom")

    def averaged(self, y2_moment: float | None = None) -> ScalarFn:
        """Closed-form ``F``; ``y2_moment`` is ``int y**2 dmu`` (quadratic kind only)."""
        if self.kind == "zero":
            return scalar_fn(_affine_drift(0.0, 0.0), "0")
        if self.kind == "constant":
            c = float(self.params[0])
            return scalar_fn(_affine_drift(c, 0.0), f"{c}")
        if self.kind == "quadratic":
            if y2_moment is None:
                raise ValueError("the quadratic coupling needs the second moment of y")
            a, b = (float(p) * float(y2_moment) for p in self.params)
            return scalar_fn(_affine_drift(a, b), f"{a} + {b} x")
        raise NotImplementedError("no closed form for a custom coupling; estimate it from an orbit")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


def zero_coupling() -> Coupling:
    return Coupling("zero")


def constant_coupling(c: float) -> Coupling:
    return Coupling("constant", (float(c),))


def quadratic_coupling(a: float, b: float) -> Coupling:
    return Coupling("quadratic", (float(a), float(b)))


def custom_coupling(fn: Callable) -> Coupling:
    return Coupling("custom", custom=fn)


# --- multipliers h -----------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _power_kernels(p: float):
    if p == 0.5:
        @nb.njit(nogil=True)
        def h(x):
            return math.sqrt(x)

        @nb.njit(nogil=True)
        def hp(x):
            return 0.5 / math.sqrt(x)

        @nb.njit(nogil=True)
        def hhp(x):
            return 0.5

        return h, hp, hhp

    q = 2.0 * p - 1.0

    @nb.njit(nogil=True)
    def h(x):
        return x**p

    @nb.njit(nogil=True)
    def hp(x):
        return p * x ** (p - 1.0)

    @nb.njit(nogil=True)
    def hhp(x):
        return p * x**q

    return h, hp, hhp


@functools.lru_cache(maxsize=None)
def _linear_kernels(a: float, b: float):
    @nb.njit(nogil=True)
    def h(x):
        return a * x + b

    @nb.njit(nogil=True)
    def hp(x):
        return a

    @nb.njit(nogil=True)
    def hhp(x):
        return a * (a * x + b)

    return h, hp, hhp


@functools.lru_cache(maxsize=None)
def _product_kernel(h, hp):
    @nb.njit(nogil=True)
    def hhp(x):
        return h(x) * hp(x)

    return hhp


@dataclass(frozen=True)
class Multiplier:
    """The multiplicative factor ``h`` of the noise together with ``h'``.

    ``lower`` is the left end of the natural domain for kinds that are only
    real-valued on a half line (``power``); simulations evaluate ``h`` at
    ``max(x, lower)`` and count the event.
    """

    kind: str
    params: tuple = ()
    custom: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "power" and not math.isfinite(float(self.params[0])):
            raise ValueError("power exponent must be finite")
        if self.kind == "linear" and float(self.params[0]) == 0.0:
            raise ValueError("linear multiplier needs a nonzero slope; use constant_h")

    @property
    def kernels(self):
        """Compiled ``(h, h', h h')``."""
        if self.kind == "constant":
            return _linear_kernels(0.0, float(self.params[0]))
        if self.kind == "power":
            return _power_kernels(float(self.params[0]))
        if self.kind == "linear":
            return _linear_kernels(float(self.params[0]), float(self.params[1]))
        if self.kind == "custom":
            h, hp = (jit_scalar(f) for f in self.custom)
            return h, hp, _product_kernel(h, hp)
        raise ValueError(f"unknown multiplier kind {self.kind!r}")

    @property
    def lower(self) -> float:
        if self.kind == "power" and float(self.params[0]) != int(self.params[0]):
            return 0.0
        return -math.inf

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def h(self) -> ScalarFn:
        return scalar_fn(self.kernels[0], f"h[{self.kind}]")

    @property
    def h_prime(self) -> ScalarFn:
        return scalar_fn(self.kernels[1], f"h'[{self.kind}]")

    @property
    def hh_prime(self) -> ScalarFn:
        return scalar_fn(self.kernels[2], f"hh'[{self.kind}]")

    def __call__(self, x):
        if np.ndim(x) == 0 and float(x) < self.lower:
            raise DomainError(f"h[{self.kind}] is undefined at {x!r}", float(x))
        return self.h(x)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


def constant_h(c: float = 1.0) -> Multiplier:
    return Multiplier("constant", (float(c),))


def power_h(p: float) -> Multiplier:
    """``h(x) = x**p``."""
    return Multiplier("power", (float(p),))


def linear_h(a: float, b: float = 0.0) -> Multiplier:
    """``h(x) = a x + b``."""
    return Multiplier("linear", (float(a), float(b)))


def custom_h(h: Callable, h_prime: Callable) -> Multiplier:
    return Multiplier("custom", (), (h, h_prime))
