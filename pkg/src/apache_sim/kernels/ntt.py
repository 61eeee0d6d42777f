"""Negacyclic number-theoretic transform over Z_p[X]/(X^N + 1).

Forward transform is an in-place Cooley-Tukey network over bit-reversed powers
of a primitive 2N-th root of unity psi, so the output is in bit-reversed
evaluation order; the inverse is the matching Gentleman-Sande network. Both
operate on the last axis and broadcast over any leading axes.

Sign convention: X^N = -1, i.e. a coefficient that wraps past X^N changes
sign. Everything else in the package (automorphisms, convolution oracles)
follows the same rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from apache_sim.errors import ShapeError, UnsupportedParameterError
from apache_sim.kernels.ring import RingParams, is_power_of_two, is_prime, ntt_primes

FORWARD = "forward"
INVERSE = "inverse"


def _bitrev(i: int, bits: int) -> int:
    return int(format(i, f"0{bits}b")[::-1], 2) if bits else 0


def _dtype_for(p: int):
    # products of two residues must fit in the lane type
    return np.uint64 if p < (1 << 32) else object


def find_psi(N: int, p: int) -> int:
    """Smallest-generator primitive 2N-th root of unity mod p."""
    exp = (p - 1) // (2 * N)
    for g in range(2, p):
        psi = pow(g, exp, p)
        if pow(psi, N, p) == p - 1:
            return psi
    raise UnsupportedParameterError(f"no primitive {2 * N}-th root mod {p}")


@dataclass(frozen=True)
class NttTables:
    N: int
    p: int
    psi: int
    zetas: np.ndarray
    zetas_inv: np.ndarray
    n_inv: int

    @property
    def dtype(self):
        return _dtype_for(self.p)


@lru_cache(maxsize=64)
def ntt_tables(N: int, p: int) -> NttTables:
    if not is_power_of_two(N):
        raise UnsupportedParameterError(f"N={N} is not a power of two")
    if not is_prime(p) or (p - 1) % (2 * N):
        raise UnsupportedParameterError(f"modulus {p} is not NTT-friendly for N={N}")
    psi = find_psi(N, p)
    psi_inv = pow(psi, -1, p)
    logn = N.bit_length() - 1
    dt = _dtype_for(p)
    z = [pow(psi, _bitrev(i, logn), p) for i in range(N)]
    zi = [pow(psi_inv, _bitrev(i, logn), p) for i in range(N)]
    return NttTables(N, p, psi, np.array(z, dtype=dt), np.array(zi, dtype=dt), pow(N, -1, p))


def ntt_forward(a: np.ndarray, p: int) -> np.ndarray:
    """Forward negacyclic NTT of residues ``a`` (values in [0, p)) along the last axis."""
    N = a.shape[-1]
    t = ntt_tables(N, p)
    lead = a.shape[:-1]
    a = np.asarray(a, dtype=t.dtype)
    length = N // 2
    while length >= 1:
        m = N // (2 * length)
        z = t.zetas[m : 2 * m][:, None]
        a = a.reshape(*lead, m, 2, length)
        u = a[..., 0, :]
        v = a[..., 1, :] * z % p
        a = np.stack(((u + v) % p, (u + (p - v)) % p), axis=-2)
        length //= 2
    return a.reshape(*lead, N)


def ntt_inverse(a: np.ndarray, p: int) -> np.ndarray:
    N = a.shape[-1]
    t = ntt_tables(N, p)
    lead = a.shape[:-1]
    a = np.asarray(a, dtype=t.dtype)
    length = 1
    while length < N:
        m = N // (2 * length)
        z = t.zetas_inv[m : 2 * m][:, None]
        a = a.reshape(*lead, m, 2, length)
        u = a[..., 0, :]
        v = a[..., 1, :]
        a = np.stack(((u + v) % p, (u + (p - v)) * z % p), axis=-2)
        length *= 2
    return a.reshape(*lead, N) * t.n_inv % p


def ntt_transform(poly, params: RingParams, direction: str = FORWARD) -> np.ndarray:
    """(I)NTT of a polynomial in ``params``.

    Single-limb rings take shape ``(..., N)``; RNS rings take ``(..., limbs, N)``
    and transform every limb under its own prime.
    """
    if not params.ntt_friendly:
        raise UnsupportedParameterError(f"ring modulus {params.moduli} is not NTT-friendly")
    if direction not in (FORWARD, INVERSE):
        raise ValueError(f"unknown direction {direction!r}")
    fn = ntt_forward if direction == FORWARD else ntt_inverse
    a = np.asarray(poly)
    if a.ndim == 0 or a.shape[-1] != params.N:
        raise ShapeError(f"expected last axis of length {params.N}, got {a.shape}")
    if params.limbs == 1:
        return fn(a, params.q)
    if a.ndim < 2 or a.shape[-2] != params.limbs:
        raise ShapeError(f"expected limb axis of length {params.limbs}, got {a.shape}")
    return np.stack([fn(a[..., i, :], p) for i, p in enumerate(params.moduli)], axis=-2)


def ntt_mul(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """Negacyclic product of residue polynomials via the NTT."""
    fa = ntt_forward(a, p)
    fb = ntt_forward(b, p)
    return ntt_inverse(fa * fb % p, p)


def negacyclic_convolution(a: Sequence[int], b: Sequence[int], q: int) -> list:
    """Schoolbook O(N^2) product modulo (X^N + 1, q); the reference oracle."""
    n = len(a)
    if len(b) != n:
        raise ShapeError("operands differ in length")
    out = [0] * n
    for i in range(n):
        ai = int(a[i])
        if ai == 0:
            continue
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += ai * int(b[j])
            else:
                out[k - n] -= ai * int(b[j])
    return [c % q for c in out]


class ExactMultiplier:
    """Exact integer negacyclic products through auxiliary NTT primes.

    Used for rings whose modulus is not NTT-friendly (e.g. q = 2^32). Inputs
    are signed integers; the integer product is rebuilt by CRT, so the caller
    must keep ``|result| < prod(primes) / 2``.
    """

    def __init__(self, N: int, primes: Sequence[int] | None = None):
        self.N = N
        self.primes = tuple(primes) if primes else ntt_primes(31, max(2 * N, 1 << 17), 2)
        p1, p2 = self.primes
        self.p1_inv = pow(p1, -1, p2)
        self.span = p1 * p2
        for p in self.primes:
            ntt_tables(N, p)

    def residues(self, signed: np.ndarray) -> np.ndarray:
        """Shape ``(..., N)`` signed ints -> ``(2, ..., N)`` residues."""
        s = np.asarray(signed, dtype=np.int64)
        return np.stack([(s % p).astype(np.uint64) for p in self.primes])

    def forward(self, signed: np.ndarray) -> np.ndarray:
        r = self.residues(signed)
        return np.stack([ntt_forward(r[i], p) for i, p in enumerate(self.primes)])

    def pointwise(self, fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
        p = np.array(self.primes, dtype=np.uint64).reshape((2,) + (1,) * (fa.ndim - 1))
        return fa * fb % p

    def inverse(self, f: np.ndarray) -> np.ndarray:
        """NTT-domain pair -> exact signed int64 coefficients."""
        p1, p2 = self.primes
        r1 = ntt_inverse(f[0], p1)
        r2 = ntt_inverse(f[1], p2)
        t = (r2 + np.uint64(p2) - r1 % np.uint64(p2)) % np.uint64(p2) * np.uint64(self.p1_inv) % np.uint64(p2)
        x = (r1 + np.uint64(p1) * t).astype(np.int64)
        half = self.span // 2
        return np.where(x > half, x - np.int64(self.span), x)

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.inverse(self.pointwise(self.forward(a), self.forward(b)))


def centered(a: np.ndarray, q: int) -> np.ndarray:
    """Representatives in [-q/2, q/2) as int64 (q <= 2^63)."""
    a = np.asarray(a, dtype=np.int64) if q <= (1 << 62) else np.asarray(a)
    return np.where(a >= (q + 1) // 2, a - q, a)
