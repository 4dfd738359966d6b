"""Bit-exact emulation of Q-format fixed-point arithmetic.

A value is stored as an integer mantissa ``raw`` and interpreted as
``raw * 2**-p``.  Products are rounded to nearest (ties away from zero),
additions are exact, and every result that leaves the representable range
raises :class:`FixedPointOverflow` instead of wrapping around.

Scalar operations work on :class:`FixedScalar`.  The ``*_raw`` array kernels
operate on numpy mantissa arrays and follow exactly the same rounding and
accumulation order; they exist so the QP solver can run thousands of
fixed-point iterations per second.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "FixedFormat",
    "FixedScalar",
    "FixedPointOverflow",
    "quantize",
    "fxp_add",
    "fxp_sub",
    "fxp_mul",
    "fxp_inner_product",
    "quantize_array",
    "dequantize_array",
    "mul_raw",
    "matvec_raw",
    "add_raw",
    "sub_raw",
    "dot_wide_raw",
]


class FixedPointOverflow(OverflowError):
    """A fixed-point result fell outside the representable range."""


@dataclass(frozen=True)
class FixedFormat:
    """Q-format descriptor: word length ``w``, sign bit ``s``, integer bits ``r``, fraction bits ``p``."""

    w: int
    s: int
    r: int
    p: int

    def __post_init__(self):
        if self.s not in (0, 1):
            raise ValueError(f"signedness must be 0 or 1, got {self.s}")
        if self.p < 1 or self.r < 0:
            raise ValueError(f"need p >= 1 and r >= 0, got r={self.r}, p={self.p}")
        if self.w != self.s + self.r + self.p:
            raise ValueError(f"w={self.w} != s + r + p = {self.s + self.r + self.p}")
        if self.w > 64:
            raise ValueError(f"word length {self.w} exceeds 64 bits")

    @classmethod
    def q(cls, word_bits: int, frac_bits: int, signed: bool = True) -> "FixedFormat":
        s = int(signed)
        return cls(w=word_bits, s=s, r=word_bits - s - frac_bits, p=frac_bits)

    @property
    def raw_max(self) -> int:
        return (1 << (self.r + self.p)) - 1

    @property
    def raw_min(self) -> int:
        return -(1 << (self.r + self.p)) if self.s else 0

    @property
    def lsb(self) -> float:
        """Spacing between successive representable values."""
        return math.ldexp(1.0, -self.p)

    @property
    def max_value(self) -> float:
        return math.ldexp(self.raw_max, -self.p)

    @property
    def min_value(self) -> float:
        return math.ldexp(self.raw_min, -self.p)

    @property
    def rounding_bound(self) -> float:
        """Worst-case error of a single rounding, 2**-(p+1)."""
        return math.ldexp(1.0, -(self.p + 1))

    @property
    def native_int64(self) -> bool:
        # products of two mantissas must fit in int64
        return self.w <= 32

    def check_raw(self, raw: int) -> int:
        if raw > self.raw_max or raw < self.raw_min:
            raise FixedPointOverflow(
                f"value {math.ldexp(raw, -self.p)!r} outside "
                f"[{self.min_value!r}, {self.max_value!r}] for {self}"
            )
        return raw

    def __str__(self) -> str:
        sign = "s" if self.s else "u"
        return f"Q{sign}{self.r}.{self.p}"


@dataclass(frozen=True)
class FixedScalar:
    raw: int
    fmt: FixedFormat

    def __post_init__(self):
        self.fmt.check_raw(self.raw)

    @property
    def value(self) -> float:
        return math.ldexp(self.raw, -self.fmt.p)

    def __float__(self) -> float:
        return self.value

    def __add__(self, other: "FixedScalar") -> "FixedScalar":
        return fxp_add(self, other)

    def __sub__(self, other: "FixedScalar") -> "FixedScalar":
        return fxp_sub(self, other)

    def __mul__(self, other: "FixedScalar") -> "FixedScalar":
        return fxp_mul(self, other)

    def __repr__(self) -> str:
        return f"FixedScalar({self.value!r}, {self.fmt})"


def _round_half_away(v: float) -> int:
    a = abs(v)
    fl = math.floor(a)
    # a - fl is exact for doubles, so the tie test is exact too
    n = int(fl) + (1 if a - fl >= 0.5 else 0)
    return -n if v < 0 else n


def _shift_round(n: int, k: int) -> int:
    """Divide integer ``n`` by 2**k rounding to nearest, ties away from zero."""
    if k == 0:
        return n
    half = 1 << (k - 1)
    if n >= 0:
        return (n + half) >> k
    return -((-n + half) >> k)


def _check_format(a: FixedScalar, b: FixedScalar) -> FixedFormat:
    if a.fmt != b.fmt:
        raise ValueError(f"format mismatch: {a.fmt} vs {b.fmt}")
    return a.fmt


def quantize(x: float, fmt: FixedFormat) -> FixedScalar:
    """Nearest representable value to ``x``; raises FixedPointOverflow if out of range."""
    if not math.isfinite(x):
        raise FixedPointOverflow(f"cannot represent non-finite value {x!r}")
    raw = _round_half_away(math.ldexp(x, fmt.p))
    return FixedScalar(fmt.check_raw(raw), fmt)


def fxp_add(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    fmt = _check_format(a, b)
    return FixedScalar(fmt.check_raw(a.raw + b.raw), fmt)


def fxp_sub(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    fmt = _check_format(a, b)
    return FixedScalar(fmt.check_raw(a.raw - b.raw), fmt)


def fxp_mul(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    fmt = _check_format(a, b)
    return FixedScalar(fmt.check_raw(_shift_round(a.raw * b.raw, fmt.p)), fmt)


def fxp_inner_product(x: Sequence[FixedScalar], y: Sequence[FixedScalar], fmt: FixedFormat | None = None) -> FixedScalar:
    """Sum of rounded products, accumulated in ascending index order.

    ``fmt`` is only needed for empty inputs, where the result is zero.
    """
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if not x:
        if fmt is None:
            raise ValueError("empty inner product needs an explicit format")
        return FixedScalar(0, fmt)
    acc = FixedScalar(0, x[0].fmt)
    for a, b in zip(x, y):
        acc = fxp_add(acc, fxp_mul(a, b))
    return acc


# ---------------------------------------------------------------------------
# array kernels on raw mantissas


def _raw_dtype(fmt: FixedFormat):
    return np.int64 if fmt.native_int64 else object


def _check_raw_array(raw: np.ndarray, fmt: FixedFormat, what: str) -> np.ndarray:
    if raw.size:
        hi, lo = raw.max(), raw.min()
        if hi > fmt.raw_max or lo < fmt.raw_min:
            bad = hi if hi > fmt.raw_max else lo
            raise FixedPointOverflow(
                f"{what}: value {math.ldexp(int(bad), -fmt.p)!r} outside "
                f"[{fmt.min_value!r}, {fmt.max_value!r}] for {fmt}"
            )
    return raw


def quantize_array(x, fmt: FixedFormat) -> np.ndarray:
    """Elementwise :func:`quantize`, returning raw mantissas."""
    v = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(v)):
        raise FixedPointOverflow("cannot represent non-finite values")
    scaled = np.ldexp(v, fmt.p)
    a = np.abs(scaled)
    fl = np.floor(a)
    mag = fl + (a - fl >= 0.5)
    # reject before the integer cast so huge inputs cannot wrap
    if mag.size and mag.max() > float(max(fmt.raw_max, -fmt.raw_min)) + 1:
        raise FixedPointOverflow(f"quantize: input magnitude {np.abs(v).max()!r} exceeds range of {fmt}")
    if fmt.native_int64:
        raw = np.where(scaled < 0, -mag, mag).astype(np.int64)
    else:
        raw = np.array([(-int(m) if s < 0 else int(m)) for m, s in zip(mag.ravel(), scaled.ravel())], dtype=object)
        raw = raw.reshape(v.shape)
    return _check_raw_array(raw, fmt, "quantize")


def dequantize_array(raw: np.ndarray, fmt: FixedFormat) -> np.ndarray:
    if fmt.native_int64:
        return np.ldexp(raw.astype(float), -fmt.p)
    return np.array([math.ldexp(int(r), -fmt.p) for r in np.ravel(raw)], dtype=float).reshape(np.shape(raw))


def _shift_round_array(prod: np.ndarray, p: int) -> np.ndarray:
    half = 1 << (p - 1)
    if prod.dtype == object:
        return np.vectorize(lambda n: _shift_round(int(n), p), otypes=[object])(prod)
    # ties away from zero: negative values take one less before the floor shift
    return (prod + (half - (prod < 0))) >> p


def mul_raw(a: np.ndarray, b: np.ndarray, fmt: FixedFormat) -> np.ndarray:
    """Elementwise rounded product of raw mantissa arrays."""
    return _check_raw_array(_shift_round_array(a * b, fmt.p), fmt, "multiply")


def add_raw(a: np.ndarray, b: np.ndarray, fmt: FixedFormat) -> np.ndarray:
    return _check_raw_array(a + b, fmt, "add")


def sub_raw(a: np.ndarray, b: np.ndarray, fmt: FixedFormat) -> np.ndarray:
    return _check_raw_array(a - b, fmt, "subtract")


def matvec_raw(M: np.ndarray, x: np.ndarray, fmt: FixedFormat, bias: np.ndarray | None = None) -> np.ndarray:
    """Fixed-point ``M @ x (+ bias)`` with per-row sequential accumulation.

    Each row is accumulated as ``((p0 + p1) + p2) + ...`` with every partial
    sum range-checked, then ``bias`` is added last.  This matches a loop of
    :func:`fxp_mul` / :func:`fxp_add` bit for bit, including where overflow
    is detected.
    """
    prods = mul_raw(M, x[np.newaxis, :], fmt)
    if prods.shape[1] == 0:
        out = np.zeros(M.shape[0], dtype=_raw_dtype(fmt))
    else:
        partial = np.cumsum(prods, axis=1)
        _check_raw_array(partial, fmt, "accumulate")
        out = partial[:, -1]
    if bias is not None:
        out = add_raw(out, bias, fmt)
    return out


def dot_wide_raw(a: np.ndarray, b: np.ndarray, fmt: FixedFormat) -> int:
    """Inner product in a double-width accumulator, as in a DSP MAC unit.

    Products are kept exact and summed in ascending order; the result is a
    raw mantissa with ``2 * fmt.p`` fractional bits.  Partial sums must stay
    within ``2 * (r + p)`` magnitude bits.
    """
    limit = 1 << (2 * (fmt.r + fmt.p))
    if fmt.native_int64:
        prods = np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)
        if prods.size == 0:
            return 0
        # |product| <= 2**62 and limit <= 2**62: a partial sum can only wrap
        # int64 after an earlier one has already left the range, so the
        # max/min check below catches every overflow
        partial = np.cumsum(prods)
        if partial.max() >= limit or partial.min() < -limit:
            raise FixedPointOverflow(f"wide accumulator overflow in {fmt}")
        return int(partial[-1])
    prods = [int(x) * int(y) for x, y in zip(np.asarray(a).tolist(), np.asarray(b).tolist())]
    acc = 0
    for v in itertools.accumulate(prods):
        if not -limit <= v < limit:
            raise FixedPointOverflow(f"wide accumulator overflow in {fmt}")
        acc = v
    return acc
