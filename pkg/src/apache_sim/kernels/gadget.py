"""Signed gadget decomposition.

A coefficient x mod q is first rounded to the gadget grid
x' = round(x * B^l / q) and x' is written in balanced base B, giving digits
d_0..d_{l-1} with |d_j| <= B/2 such that

    sum_j d_j * q / B^(j+1)  ==  x'  * q / B^l  ==  x  (mod q, up to rounding).

Digit 0 is the most significant. When B^l divides q (e.g. q = 2^32) the
gadget weights are integers; otherwise they are rational and only the
rounding error is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from apache_sim.errors import InvalidParameterError


def _check(q: int, base_log: int, levels: int) -> None:
    if base_log <= 0 or levels <= 0:
        raise InvalidParameterError("base_log and levels must be positive")
    if q < 2:
        raise InvalidParameterError(f"invalid modulus {q}")
    if base_log * levels > (q - 1).bit_length():
        raise InvalidParameterError(
            f"base_log*levels={base_log * levels} exceeds the {((q - 1).bit_length())}-bit modulus"
        )


def gadget_weights(q: int, base_log: int, levels: int) -> list:
    """Integer gadget vector round(q / B^(j+1)) for j = 0..levels-1."""
    out = []
    for j in range(levels):
        b = base_log * (j + 1)
        out.append((q + (1 << (b - 1))) >> b)
    return out


@dataclass
class DecomposedBits:
    digits: np.ndarray  # (..., levels, N)
    base_log: int
    levels: int
    q: int

    @property
    def base(self) -> int:
        return 1 << self.base_log

    def scaled(self) -> np.ndarray:
        """Recover x' = sum_j d_j B^(l-1-j) (the value on the gadget grid)."""
        acc = np.zeros(self.digits.shape[:-2] + self.digits.shape[-1:], dtype=object)
        for j in range(self.levels):
            acc = acc * self.base + self.digits[..., j, :].astype(object)
        return acc

    def recompose(self) -> np.ndarray:
        """Nearest integer to sum_j d_j q / B^(j+1), reduced mod q."""
        s = self.scaled()
        bl = 1 << (self.base_log * self.levels)
        out = (s * self.q * 2 + bl) // (2 * bl)
        return np.array([int(v) % self.q for v in np.ravel(out)], dtype=object).reshape(out.shape)

    def error(self, source) -> np.ndarray:
        """Exact |sum_j d_j q / B^(j+1) - x| measured on the circle mod q (floats)."""
        s = np.ravel(self.scaled())
        src = np.ravel(np.asarray(source, dtype=object))
        bl = 1 << (self.base_log * self.levels)
        out = []
        for sv, xv in zip(s, src):
            d = Fraction(int(sv) * self.q, bl) - int(xv)
            d = d % self.q
            out.append(float(min(d, self.q - d)))
        return np.array(out).reshape(np.shape(source))


def gadget_decompose(poly, base_log: int, levels: int, q: int = 1 << 32) -> DecomposedBits:
    """Balanced base-2^base_log decomposition of every coefficient of ``poly``.

    Digits lie in [-B/2, B/2). The returned ``digits`` array has the level
    axis inserted before the last axis.
    """
    _check(q, base_log, levels)
    x = np.asarray(poly)
    B = 1 << base_log
    bl_bits = base_log * levels
    logq = (q - 1).bit_length()
    if q == 1 << logq and logq <= 62:
        shift = logq - bl_bits
        xi = x.astype(np.int64)
        xs = (xi + ((1 << shift) >> 1)) >> shift if shift else xi
        xs = xs & ((1 << bl_bits) - 1)
    else:
        xo = x.astype(object)
        bl = 1 << bl_bits
        xs = (xo * bl * 2 + q) // (2 * q) % bl
        if bl_bits <= 62:
            xs = xs.astype(np.int64)

    digits = []
    for _ in range(levels):
        d = xs % B
        xs = xs // B
        carry = d >= B // 2
        d = np.where(carry, d - B, d)
        xs = xs + carry
        digits.append(d)
    digits.reverse()
    arr = np.stack(digits, axis=-2)
    if arr.dtype == object:
        arr = arr.astype(np.int64)
    return DecomposedBits(arr, base_log, levels, q)
