"""Configurable modular multiplier.

Models the 64-bit Karatsuba datapath that can be split into two independent
32-bit lanes. A k-bit product is formed from three k/2-bit partial products
and reduced with Barrett reduction (three k-bit multiplies plus conditional
subtractions), so operands and results stay in canonical form [0, q).
"""

from __future__ import annotations

import enum
from typing import Sequence, Tuple, Union

from apache_sim.errors import InvalidParameterError, PreconditionError

WORD = 64
HALF = 32
_HALF_MASK = (1 << HALF) - 1


class MultiplierMode(str, enum.Enum):
    ONE64 = "one64"
    TWO32 = "two32"

    @property
    def lanes(self) -> int:
        return 1 if self is MultiplierMode.ONE64 else 2

    @property
    def lane_width(self) -> int:
        return WORD if self is MultiplierMode.ONE64 else HALF


def karatsuba_mul(x: int, y: int, width: int = WORD) -> int:
    """Full ``2*width``-bit product of two ``width``-bit integers.

    Uses three ``width/2``-bit partial products:
    ``x*y = z2*2^w + (z1 - z2 - z0)*2^(w/2) + z0``.
    """
    h = width // 2
    mask = (1 << h) - 1
    x1, x0 = x >> h, x & mask
    y1, y0 = y >> h, y & mask
    z2 = x1 * y1
    z0 = x0 * y0
    # the middle multiplier sees (h+1)-bit operands; the carry is the one
    # cut when the datapath is split into lanes
    z1 = (x1 + x0) * (y1 + y0) - z2 - z0
    return (z2 << (2 * h)) + (z1 << h) + z0


class BarrettReducer:
    """Barrett reduction of products ``z < q**2`` for a fixed modulus."""

    def __init__(self, q: int):
        if q < 2:
            raise InvalidParameterError(f"modulus must be >= 2, got {q}")
        self.q = q
        self.k = q.bit_length()
        self.mu = (1 << (2 * self.k)) // q

    def reduce(self, z: int) -> int:
        q, k = self.q, self.k
        # multiplier 2: quotient estimate; multiplier 3: t*q
        t = ((z >> (k - 1)) * self.mu) >> (k + 1)
        r = z - t * q
        # estimate is low by at most 2
        while r >= q:
            r -= q
        return r


def barrett_reduce(z: int, q: int) -> int:
    return BarrettReducer(q).reduce(z)


def _check_operand(v: int, q: int, name: str) -> None:
    if v < 0 or v >= q:
        raise PreconditionError(f"{name}={v} must lie in [0, {q})")


def _check_modulus(q: int, width: int) -> None:
    if q in (0, 1) or q < 0:
        raise InvalidParameterError(f"invalid modulus {q}")
    if q.bit_length() > width:
        raise InvalidParameterError(f"modulus {q} wider than {width}-bit lane")


Operand = Union[int, Sequence[int]]


def mod_mul_configurable(
    mode: MultiplierMode | str, x: Operand, y: Operand, q: Operand
) -> Union[int, Tuple[int, int]]:
    """Modular product(s) through the configurable multiplier.

    In ``one64`` mode ``x``, ``y`` and ``q`` are single integers and one
    product is returned. In ``two32`` mode ``x`` and ``y`` are pairs of lane
    operands and ``q`` is either a pair of lane moduli or one modulus shared by
    both lanes; a pair of products is returned.
    """
    mode = MultiplierMode(mode)
    if mode is MultiplierMode.ONE64:
        if not isinstance(q, int) or not isinstance(x, int) or not isinstance(y, int):
            raise InvalidParameterError("one64 mode takes scalar operands")
        _check_modulus(q, WORD)
        _check_operand(x, q, "x")
        _check_operand(y, q, "y")
        return BarrettReducer(q).reduce(karatsuba_mul(x, y, WORD))

    qs = (q, q) if isinstance(q, int) else tuple(q)
    xs, ys = tuple(x), tuple(y)
    if len(qs) != 2 or len(xs) != 2 or len(ys) != 2:
        raise InvalidParameterError("two32 mode takes two lanes per operand")
    for lane in range(2):
        _check_modulus(qs[lane], HALF)
        _check_operand(xs[lane], qs[lane], f"x[{lane}]")
        _check_operand(ys[lane], qs[lane], f"y[{lane}]")

    # pack the lanes into one 64-bit word and run the split datapath: the
    # outer two Karatsuba multipliers produce the lane products directly and
    # the middle multiplier is gated off
    xw = (xs[0] << HALF) | xs[1]
    yw = (ys[0] << HALF) | ys[1]
    hi = (xw >> HALF) * (yw >> HALF)
    lo = (xw & _HALF_MASK) * (yw & _HALF_MASK)
    return (BarrettReducer(qs[0]).reduce(hi), BarrettReducer(qs[1]).reduce(lo))
