"""Counter-based random streams usable from numba kernels.

Every realization in an ensemble owns an independent stream.  The stream for
``(master_seed, index)`` is Philox4x64-10 keyed by a 128-bit hash of the master
seed, with the realization index placed in the high counter words.  The raw
output of a stream is bit-identical to ``numpy.random.Philox(key=key,
counter=[0, 0, index, purpose])``, which the test-suite uses as an oracle.

Stream state lives in a small ``uint64`` array so kernels can carry it around
without object overhead::

    [key0, key1, ctr0, ctr1, ctr2, ctr3, buf0, buf1, buf2, buf3, pos]
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np
from llvmlite import ir
from numba import types
from numba.extending import intrinsic

STATE_SIZE = 11

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_FOUR = np.uint64(4)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi

# 256-layer normal ziggurat (Marsaglia & Tsang 2000, Doornik's layout)
_ZIG_R = 3.6541528853610088


def _ziggurat_tables(r=_ZIG_R, layers=256):
    f = math.exp(-0.5 * r * r)
    v = r * f + math.sqrt(math.pi / 2.0) * math.erfc(r / math.sqrt(2.0))
    x = np.zeros(layers + 1)
    x[0] = v / f
    x[1] = r
    for i in range(2, layers):
        x[i] = math.sqrt(-2.0 * math.log(v / x[i - 1] + f))
        f = math.exp(-0.5 * x[i] * x[i])
    ratio = x[1:] / x[:-1]
    return x, ratio


_ZIG_X, _ZIG_RATIO = _ziggurat_tables()
_ZIG_MASK = np.uint64(255)


def master_key(master_seed: int) -> tuple[np.uint64, np.uint64]:
    """128-bit Philox key derived from a 64-bit master seed."""
    if not 0 <= int(master_seed) < 2**64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master_seed}")
    words = np.random.SeedSequence(int(master_seed)).generate_state(2, np.uint64)
    return words[0], words[1]


@intrinsic
def _mulhilo(typingctx, a, b):
    """Full 64x64 -> 128-bit product as (hi, lo)."""
    sig = types.UniTuple(types.uint64, 2)(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i128 = ir.IntType(128)
        p = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
        hi = builder.trunc(builder.lshr(p, ir.Constant(i128, 64)), ir.IntType(64))
        lo = builder.trunc(p, ir.IntType(64))
        return context.make_tuple(builder, signature.return_type, (hi, lo))

    return sig, codegen


@nb.njit(inline="always")
def _round(c0, c1, c2, c3, k0, k1):
    hi0, lo0 = _mulhilo(_M0, c0)
    hi1, lo1 = _mulhilo(_M1, c2)
    return hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0


@nb.njit(inline="always")
def _block(c0, c1, c2, c3, k0, k1):
    x0, x1, x2, x3 = _round(c0, c1, c2, c3, k0, k1)
    for _ in range(9):
        k0 += _W0
        k1 += _W1
        x0, x1, x2, x3 = _round(x0, x1, x2, x3, k0, k1)
    return x0, x1, x2, x3


@nb.njit(inline="always")
def _bump(c0, c1, c2, c3):
    c0 += _ONE
    if c0 == _ZERO:
        c1 += _ONE
        if c1 == _ZERO:
            c2 += _ONE
            if c2 == _ZERO:
                c3 += _ONE
    return c0, c1, c2, c3


@nb.njit(nogil=True)
def _refill(st):
    c0, c1, c2, c3 = _bump(st[2], st[3], st[4], st[5])
    st[2] = c0
    st[3] = c1
    st[4] = c2
    st[5] = c3
    x0, x1, x2, x3 = _block(c0, c1, c2, c3, st[0], st[1])
    st[6] = x0
    st[7] = x1
    st[8] = x2
    st[9] = x3
    st[10] = _ZERO


@nb.njit(nogil=True)
def _rewind(st, k):
    """Step the stream back by ``k`` outputs (streams never exceed 2**62 blocks)."""
    if k == 0:
        return
    consumed = np.int64(st[2]) * 4 + np.int64(st[10]) - 4 - k
    c0 = consumed // 4 + 1
    st[2] = np.uint64(c0)
    x0, x1, x2, x3 = _block(st[2], st[3], st[4], st[5], st[0], st[1])
    st[6] = x0
    st[7] = x1
    st[8] = x2
    st[9] = x3
    st[10] = np.uint64(consumed % 4)


@nb.njit(nogil=True)
def init_state(st, k0, k1, index, purpose):
    """Position ``st`` at the start of stream ``index`` (substream ``purpose``)."""
    st[0] = np.uint64(k0)
    st[1] = np.uint64(k1)
    st[2] = _ZERO
    st[3] = _ZERO
    st[4] = np.uint64(index)
    st[5] = np.uint64(purpose)
    st[10] = _FOUR


@nb.njit(nogil=True)
def next_u64(st):
    if st[10] >= _FOUR:
        _refill(st)
    pos = st[10]
    st[10] = pos + _ONE
    return st[6 + np.int64(pos)]


@nb.njit(nogil=True)
def next_double(st):
    """Uniform on [0, 1); same conversion as ``numpy.random.Generator.random``."""
    return np.float64(next_u64(st) >> _S11) * _TWO_M53


@nb.njit(nogil=True)
def next_open_double(st):
    """Uniform on (0, 1]."""
    return 1.0 - next_double(st)


@nb.njit(nogil=True)
def fill_u64(st, out):
    """Fill ``out`` with the next raw outputs; equivalent to repeated :func:`next_u64`."""
    n = out.shape[0]
    i = 0
    while i < n and st[10] < _FOUR:
        out[i] = next_u64(st)
        i += 1
    k0 = st[0]
    k1 = st[1]
    c0 = st[2]
    c1 = st[3]
    c2 = st[4]
    c3 = st[5]
    while n - i >= 4:
        c0, c1, c2, c3 = _bump(c0, c1, c2, c3)
        x0, x1, x2, x3 = _block(c0, c1, c2, c3, k0, k1)
        out[i] = x0
        out[i + 1] = x1
        out[i + 2] = x2
        out[i + 3] = x3
        i += 4
    st[2] = c0
    st[3] = c1
    st[4] = c2
    st[5] = c3
    while i < n:
        out[i] = next_u64(st)
        i += 1


@nb.njit(nogil=True)
def _zig_slow(st, layer, u):
    # rejection on the wedge or the tail, once the rectangle test has failed
    while True:
        if layer == 0:
            while True:
                x = math.log(next_open_double(st)) / _ZIG_R
                y = math.log(next_open_double(st))
                if -2.0 * y >= x * x:
                    break
            return x - _ZIG_R if u < 0.0 else _ZIG_R - x
        x = u * _ZIG_X[layer]
        f0 = math.exp(-0.5 * (_ZIG_X[layer] * _ZIG_X[layer] - x * x))
        f1 = math.exp(-0.5 * (_ZIG_X[layer + 1] * _ZIG_X[layer + 1] - x * x))
        if f1 + next_double(st) * (f0 - f1) < 1.0:
            return x
        bits = next_u64(st)
        layer = np.int64(bits & _ZIG_MASK)
        u = 2.0 * (np.float64(bits >> _S11) * _TWO_M53) - 1.0
        if abs(u) < _ZIG_RATIO[layer]:
            return u * _ZIG_X[layer]


@nb.njit(nogil=True)
def next_normal(st):
    bits = next_u64(st)
    layer = np.int64(bits & _ZIG_MASK)
    u = 2.0 * (np.float64(bits >> _S11) * _TWO_M53) - 1.0
    if abs(u) < _ZIG_RATIO[layer]:
        return u * _ZIG_X[layer]
    return _zig_slow(st, layer, u)


@nb.njit(nogil=True)
def fill_double(st, out):
    """Uniforms on [0, 1) in bulk; same values as repeated :func:`next_double`."""
    raw = np.empty(out.shape[0], dtype=np.uint64)
    fill_u64(st, raw)
    for i in range(out.shape[0]):
        out[i] = np.float64(raw[i] >> _S11) * _TWO_M53


@nb.njit
def _take(st, buf, j):
    if j == buf.shape[0]:
        fill_u64(st, buf)
        j = 0
    return buf[j], j + 1


@nb.njit(inline="always")
def _unit(bits):
    return np.float64(bits >> _S11) * _TWO_M53


@nb.njit(nogil=True)
def _zig_slow_buffered(st, buf, j, layer, u):
    # same acceptance logic as _zig_slow, reading from the local buffer
    while True:
        if layer == 0:
            while True:
                bits, j = _take(st, buf, j)
                x = math.log(1.0 - _unit(bits)) / _ZIG_R
                bits, j = _take(st, buf, j)
                y = math.log(1.0 - _unit(bits))
                if -2.0 * y >= x * x:
                    break
            return (x - _ZIG_R if u < 0.0 else _ZIG_R - x), j
        x = u * _ZIG_X[layer]
        f0 = math.exp(-0.5 * (_ZIG_X[layer] * _ZIG_X[layer] - x * x))
        f1 = math.exp(-0.5 * (_ZIG_X[layer + 1] * _ZIG_X[layer + 1] - x * x))
        bits, j = _take(st, buf, j)
        if f1 + _unit(bits) * (f0 - f1) < 1.0:
            return x, j
        bits, j = _take(st, buf, j)
        layer = np.int64(bits & _ZIG_MASK)
        u = 2.0 * _unit(bits) - 1.0
        if abs(u) < _ZIG_RATIO[layer]:
            return u * _ZIG_X[layer], j


@nb.njit(nogil=True)
def fill_normal(st, out):
    """Fill ``out`` with standard normals; same values as repeated :func:`next_normal`."""
    n = out.shape[0]
    if n == 0:
        return
    m = min(n, 1024)
    buf = np.empty(m, dtype=np.uint64)
    fill_u64(st, buf)
    j = 0
    i = 0
    while i < n:
        if j == m:
            fill_u64(st, buf)
            j = 0
        bits = buf[j]
        j += 1
        layer = np.int64(bits & _ZIG_MASK)
        u = 2.0 * (np.float64(bits >> _S11) * _TWO_M53) - 1.0
        if abs(u) < _ZIG_RATIO[layer]:
            out[i] = u * _ZIG_X[layer]
        else:
            val, j = _zig_slow_buffered(st, buf, j, layer, u)
            out[i] = val
        i += 1
    # hand unread buffered outputs back to the stream
    _rewind(st, m - j)


@nb.njit(nogil=True)
def next_exponential(st):
    return -math.log(next_open_double(st))


@nb.njit(nogil=True)
def next_gamma(st, shape):
    """Gamma(shape, 1) by Marsaglia-Tsang; shapes below one use the power boost."""
    if shape <= 0.0:
        return 0.0
    boost = 1.0
    a = shape
    if a < 1.0:
        boost = next_open_double(st) ** (1.0 / a)
        a += 1.0
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = next_normal(st)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = next_open_double(st)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v * boost
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v * boost


@nb.njit(nogil=True)
def _poisson_inversion(st, mean):
    p = math.exp(-mean)
    cdf = p
    u = next_double(st)
    k = 0
    limit = mean + 40.0 * math.sqrt(mean) + 100.0
    while u > cdf and k < limit:
        k += 1
        p *= mean / k
        cdf += p
    return k


@nb.njit(nogil=True)
def next_poisson(st, mean):
    """Poisson(mean) by sequential inversion; large means are split into chunks."""
    total = 0
    rest = mean
    while rest > 500.0:
        total += _poisson_inversion(st, 500.0)
        rest -= 500.0
    if rest > 0.0:
        total += _poisson_inversion(st, rest)
    return total


class Stream:
    """Python handle on one counter-based stream.

    >>> s = Stream(0, 3)
    >>> 0.0 <= s.random() < 1.0
    True
    """

    def __init__(self, master_seed: int = 0, index: int = 0, purpose: int = 0):
        self.master_seed = int(master_seed)
        self.index = int(index)
        self.purpose = int(purpose)
        k0, k1 = master_key(self.master_seed)
        self.state = np.zeros(STATE_SIZE, dtype=np.uint64)
        init_state(self.state, k0, k1, np.uint64(self.index), np.uint64(self.purpose))

    def __repr__(self) -> str:
        return f"Stream(master_seed={self.master_seed}, index={self.index}, purpose={self.purpose})"

    def random(self) -> float:
        return float(next_double(self.state))

    def normal(self) -> float:
        return float(next_normal(self.state))

    def normals(self, n: int) -> np.ndarray:
        out = np.empty(int(n))
        fill_normal(self.state, out)
        return out

    def exponential(self) -> float:
        return float(next_exponential(self.state))

    def gamma(self, shape: float) -> float:
        return float(next_gamma(self.state, float(shape)))

    def poisson(self, mean: float) -> int:
        return int(next_poisson(self.state, float(mean)))

    def raw(self, n: int) -> np.ndarray:
        return np.array([next_u64(self.state) for _ in range(int(n))], dtype=np.uint64)


def stream_state(stream) -> np.ndarray:
    """State array of a :class:`Stream`; other generators are rejected."""
    if isinstance(stream, Stream):
        return stream.state
    raise TypeError(f"expected a fastslow Stream, got {type(stream).__name__}")


# stream purposes: one realization index can own several independent streams
PURPOSE_INITIAL = 0
PURPOSE_NOISE = 1
PURPOSE_EXACT = 2
PURPOSE_JUMPS = 3
