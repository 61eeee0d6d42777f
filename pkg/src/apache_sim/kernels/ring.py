"""Ring parameters and small number-theory helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import prod
from typing import Tuple

from apache_sim.errors import InvalidParameterError

# deterministic Miller-Rabin witnesses for n < 3.3e24
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=None)
def ntt_primes(bits: int, two_n: int, count: int) -> Tuple[int, ...]:
    """The ``count`` largest primes below ``2**bits`` with ``p = 1 mod two_n``."""
    out = []
    p = ((1 << bits) - 1) // two_n * two_n + 1
    while len(out) < count:
        if p < two_n:
            raise InvalidParameterError("not enough NTT-friendly primes")
        if p < (1 << bits) and is_prime(p):
            out.append(p)
        p -= two_n
    return tuple(out)


@dataclass(frozen=True)
class RingParams:
    """Polynomial ring Z_q[X]/(X^N + 1), optionally in RNS form.

    ``moduli`` lists the RNS limbs; when omitted the ring has one limb equal
    to ``q``. ``q`` is always the product of the limbs.
    """

    N: int
    q: int = 0
    moduli: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not is_power_of_two(self.N):
            raise InvalidParameterError(f"N={self.N} is not a power of two")
        moduli = tuple(self.moduli) if self.moduli else (self.q,)
        if any(m < 2 for m in moduli):
            raise InvalidParameterError(f"invalid moduli {moduli}")
        q = prod(moduli)
        if self.q and self.q != q:
            raise InvalidParameterError("q must equal the product of the RNS limbs")
        object.__setattr__(self, "moduli", moduli)
        object.__setattr__(self, "q", q)

    @property
    def limbs(self) -> int:
        return len(self.moduli)

    @property
    def ntt_friendly(self) -> bool:
        return all(is_prime(p) and (p - 1) % (2 * self.N) == 0 for p in self.moduli)

    @property
    def bitwidth(self) -> int:
        return (self.q - 1).bit_length()

    @classmethod
    def rns(cls, N: int, limbs: int, bits: int = 31) -> "RingParams":
        return cls(N=N, moduli=ntt_primes(bits, 2 * N, limbs))


# default toy parameter sets
TFHE_TOY = RingParams(N=512, q=1 << 32)
CKKS_TOY = RingParams.rns(N=4096, limbs=2, bits=31)
# full-scale CKKS ring; only used for timing-level runs
CKKS_FULL = RingParams.rns(N=1 << 16, limbs=44, bits=31)
