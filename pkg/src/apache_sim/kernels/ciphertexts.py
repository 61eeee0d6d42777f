"""LWE / RLWE / RGSW ciphertexts, key generation and encrypt/decrypt helpers.

Conventions: LWE phase is ``b - <a, s>``; RLWE phase is ``b - a*s`` in
Z_q[X]/(X^N + 1). Coefficients are stored canonically in [0, q) as int64
(single modulus) or as an ``(limbs, N)`` uint64 array (RNS).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np

from apache_sim.errors import InvalidParameterError, ShapeError
from apache_sim.kernels.gadget import gadget_weights
from apache_sim.kernels.ntt import ExactMultiplier, centered, ntt_forward, ntt_inverse
from apache_sim.kernels.ring import RingParams


# -- noise ------------------------------------------------------------------

@lru_cache(maxsize=32)
def gaussian_cdf_table(sigma: float, tail: float = 10.0):
    """Support and CDF of the centered discrete Gaussian, truncated at tail*sigma.

    Sampling draws u ~ U[0,1) and returns the first support point whose CDF
    exceeds u (inverse-CDF method).
    """
    bound = max(1, int(np.ceil(tail * sigma)))
    support = np.arange(-bound, bound + 1, dtype=np.int64)
    w = np.exp(-(support.astype(np.float64) ** 2) / (2.0 * sigma * sigma))
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return support, cdf


def sample_gaussian(rng: np.random.Generator, sigma: float, size) -> np.ndarray:
    if sigma < 0:
        raise InvalidParameterError("noise standard deviation must be >= 0")
    if sigma == 0:
        return np.zeros(size, dtype=np.int64)
    support, cdf = gaussian_cdf_table(float(sigma))
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return support[np.minimum(idx, len(support) - 1)]


# -- ciphertext types ---------------------------------------------------------

@dataclass
class LweCiphertext:
    a: np.ndarray
    b: int
    q: int = 1 << 32
    width: int = 32

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.int64)
        self.b = int(self.b)
        if self.a.ndim != 1:
            raise ShapeError("LWE mask must be a vector")
        if self.width not in (32, 64):
            raise InvalidParameterError(f"width must be 32 or 64, got {self.width}")
        if (self.a < 0).any() or (self.a >= self.q).any() or not 0 <= self.b < self.q:
            raise InvalidParameterError("LWE entries must lie in [0, q)")

    @property
    def n(self) -> int:
        return len(self.a)

    def __eq__(self, other):
        return (
            isinstance(other, LweCiphertext)
            and self.q == other.q
            and self.b == other.b
            and np.array_equal(self.a, other.a)
        )

    def __sub__(self, other: "LweCiphertext") -> "LweCiphertext":
        return LweCiphertext((self.a - other.a) % self.q, (self.b - other.b) % self.q, self.q, self.width)

    def __add__(self, other: "LweCiphertext") -> "LweCiphertext":
        return LweCiphertext((self.a + other.a) % self.q, (self.b + other.b) % self.q, self.q, self.width)

    def scale(self, c: int) -> "LweCiphertext":
        return LweCiphertext(self.a * c % self.q, self.b * c % self.q, self.q, self.width)

    @classmethod
    def trivial(cls, n: int, b: int, q: int = 1 << 32) -> "LweCiphertext":
        return cls(np.zeros(n, dtype=np.int64), b % q, q)


@dataclass
class RlweCiphertext:
    a: np.ndarray
    b: np.ndarray
    params: RingParams
    level: int = 0

    def __post_init__(self):
        self.a = _as_poly(self.a, self.params)
        self.b = _as_poly(self.b, self.params)
        if self.level < 0:
            raise InvalidParameterError("level must be >= 0")

    @property
    def N(self) -> int:
        return self.params.N

    def __eq__(self, other):
        return (
            isinstance(other, RlweCiphertext)
            and self.params == other.params
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )

    def copy(self) -> "RlweCiphertext":
        return RlweCiphertext(self.a.copy(), self.b.copy(), self.params, self.level)

    @classmethod
    def zero(cls, params: RingParams) -> "RlweCiphertext":
        z = np.zeros(_poly_shape(params), dtype=_poly_dtype(params))
        return cls(z, z.copy(), params)

    @classmethod
    def trivial(cls, m, params: RingParams) -> "RlweCiphertext":
        return cls(np.zeros(_poly_shape(params), dtype=_poly_dtype(params)), reduce_poly(m, params), params)


@dataclass
class RgswCiphertext:
    """2*levels RLWE rows: rows j < levels carry m*g_j on the mask, rows
    levels+j carry it on the body."""

    rows: List[RlweCiphertext]
    base_log: int
    levels: int
    params: RingParams
    _ntt: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.rows) != 2 * self.levels:
            raise ShapeError(f"RGSW needs {2 * self.levels} rows, got {len(self.rows)}")
        if self.base_log * self.levels > self.params.bitwidth:
            raise InvalidParameterError("base_log*levels exceeds the modulus width")

    def as_array(self) -> np.ndarray:
        """Rows as ``(2*levels, 2, N)`` with component 0 = mask, 1 = body."""
        return np.stack([np.stack([r.a, r.b]) for r in self.rows])

    def ntt_form(self, mult: ExactMultiplier) -> np.ndarray:
        """Rows in the auxiliary-prime NTT domain, ``(2, 2*levels, 2, N)``; cached."""
        if self._ntt is None:
            self._ntt = mult.forward(centered(self.as_array(), self.params.q))
        return self._ntt


# -- polynomial helpers -------------------------------------------------------

def _poly_shape(params: RingParams):
    return (params.N,) if params.limbs == 1 else (params.limbs, params.N)


def _poly_dtype(params: RingParams):
    return np.int64 if params.limbs == 1 else np.uint64


def _as_poly(x, params: RingParams) -> np.ndarray:
    arr = np.asarray(x, dtype=_poly_dtype(params))
    if arr.shape != _poly_shape(params):
        raise ShapeError(f"expected polynomial of shape {_poly_shape(params)}, got {arr.shape}")
    return arr


def reduce_poly(m, params: RingParams) -> np.ndarray:
    """Reduce an integer polynomial (length N, signed allowed) into the ring."""
    m = np.asarray(m)
    if params.limbs == 1:
        if m.shape != (params.N,):
            raise ShapeError(f"expected {params.N} coefficients, got {m.shape}")
        return np.array([int(v) % params.q for v in m], dtype=np.int64) if m.dtype == object else (
            m.astype(np.int64) % params.q
        )
    if m.shape == (params.N,):
        return np.stack([(m.astype(object) % p).astype(np.uint64) for p in params.moduli])
    return _as_poly(m, params)


@lru_cache(maxsize=16)
def exact_multiplier(N: int) -> ExactMultiplier:
    return ExactMultiplier(N)


def poly_mul_small(big: np.ndarray, small: np.ndarray, params: RingParams) -> np.ndarray:
    """Ring product of a canonical polynomial with a small signed one.

    ``small`` is either an ``(N,)`` signed vector (reduced per limb in RNS) or
    already reduced to the ring shape.
    """
    small = np.asarray(small)
    if params.limbs > 1 or params.ntt_friendly:
        s = reduce_poly(small, params) if small.shape == (params.N,) else small
        if params.limbs == 1:
            return (ntt_inverse(ntt_forward(big.astype(np.uint64), params.q) * ntt_forward(
                s.astype(np.uint64), params.q) % params.q, params.q)).astype(np.int64)
        out = np.empty_like(big, dtype=np.uint64)
        for i, p in enumerate(params.moduli):
            out[i] = ntt_inverse(ntt_forward(big[i], p) * ntt_forward(s[i], p) % p, p)
        return out
    mult = exact_multiplier(params.N)
    bound = params.N * (params.q // 2) * max(1, int(np.abs(small).max(initial=0)))
    if 2 * bound >= mult.span:
        raise InvalidParameterError("operand too large for the exact multiplier")
    prod = mult.mul(centered(big, params.q), small)
    return prod % params.q


def monomial_mul(poly: np.ndarray, k: int, q: int) -> np.ndarray:
    """X^k * poly in Z_q[X]/(X^N+1) for any integer k (last axis)."""
    N = poly.shape[-1]
    k %= 2 * N
    sign = 1
    if k >= N:
        k -= N
        sign = -1
    out = np.roll(poly, k, axis=-1).astype(np.int64)
    out[..., :k] = -out[..., :k]
    if sign < 0:
        out = -out
    return out % q


# -- keys ----------------------------------------------------------------------

@dataclass
class LweSecretKey:
    s: np.ndarray
    q: int = 1 << 32

    @property
    def n(self) -> int:
        return len(self.s)


@dataclass
class RlweSecretKey:
    s: np.ndarray  # small signed coefficients, shape (N,)
    params: RingParams

    def as_lwe_key(self) -> LweSecretKey:
        """Key under which sample-extracted LWE ciphertexts decrypt."""
        return LweSecretKey(np.asarray(self.s, dtype=np.int64), self.params.q)


def lwe_keygen(n: int, rng: np.random.Generator, q: int = 1 << 32) -> LweSecretKey:
    return LweSecretKey(rng.integers(0, 2, n, dtype=np.int64), q)


def rlwe_keygen(params: RingParams, rng: np.random.Generator, ternary: bool = False) -> RlweSecretKey:
    lo = -1 if ternary else 0
    return RlweSecretKey(rng.integers(lo, 2, params.N, dtype=np.int64), params)


# -- encrypt / decrypt -----------------------------------------------------------

def lwe_encrypt(m: int, key: LweSecretKey, rng: np.random.Generator, noise_std: float = 0.0,
                width: int = 32) -> LweCiphertext:
    """Encrypt the already-scaled message ``m`` (an element of Z_q)."""
    q = key.q
    a = rng.integers(0, q, key.n, dtype=np.int64) if q <= (1 << 62) else None
    e = int(sample_gaussian(rng, noise_std, 1)[0])
    b = (int(np.dot(a.astype(object), key.s.astype(object))) + m + e) % q
    return LweCiphertext(a, b, q, width)


def lwe_phase(ct: LweCiphertext, key: LweSecretKey) -> int:
    return (ct.b - int(np.dot(ct.a.astype(object), key.s.astype(object)))) % ct.q


def lwe_decrypt(ct: LweCiphertext, key: LweSecretKey, plaintext_modulus: int = 0) -> int:
    """Phase, or the phase rounded to Z_t when ``plaintext_modulus`` is given."""
    ph = lwe_phase(ct, key)
    if not plaintext_modulus:
        return ph
    return (ph * plaintext_modulus * 2 + ct.q) // (2 * ct.q) % plaintext_modulus


def encode_bit(bit: int, q: int = 1 << 32) -> int:
    """Boolean encoding used by the gate bootstrap: true -> q/8, false -> -q/8."""
    return q // 8 if bit else (-q // 8) % q


def decode_bit(phase: int, q: int = 1 << 32) -> int:
    return int(0 < phase < q // 2)


def rlwe_encrypt(m, key: RlweSecretKey, rng: np.random.Generator, noise_std: float = 0.0,
                 level: int = 0) -> RlweCiphertext:
    params = key.params
    if params.limbs == 1:
        a = rng.integers(0, params.q, params.N, dtype=np.int64)
    else:
        a = np.stack([rng.integers(0, p, params.N, dtype=np.int64).astype(np.uint64) for p in params.moduli])
    e = sample_gaussian(rng, noise_std, params.N)
    as_ = poly_mul_small(a, key.s, params)
    if params.limbs == 1:
        b = (as_ + reduce_poly(m, params) + e) % params.q
    else:
        mm = reduce_poly(m, params)
        ee = reduce_poly(e, params)
        p = np.array(params.moduli, dtype=np.uint64)[:, None]
        b = (as_ + mm % p + ee) % p
    return RlweCiphertext(a, b, params, level)


def rlwe_phase(ct: RlweCiphertext, key: RlweSecretKey) -> np.ndarray:
    params = ct.params
    as_ = poly_mul_small(ct.a, key.s, params)
    if params.limbs == 1:
        return (ct.b - as_) % params.q
    p = np.array(params.moduli, dtype=np.uint64)[:, None]
    return (ct.b + p - as_) % p


def rlwe_decrypt(ct: RlweCiphertext, key: RlweSecretKey) -> np.ndarray:
    """Phase polynomial; RNS phases are CRT-composed to centered Python ints."""
    ph = rlwe_phase(ct, key)
    if ct.params.limbs == 1:
        return ph
    return crt_compose(ph, ct.params)


def crt_compose(res: np.ndarray, params: RingParams, center: bool = True) -> np.ndarray:
    Q = params.q
    out = np.zeros(params.N, dtype=object)
    for i, p in enumerate(params.moduli):
        qi = Q // p
        out = out + res[i].astype(object) * (qi * pow(qi, -1, p))
    out = out % Q
    if center:
        out = np.where(out > Q // 2, out - Q, out)
    return out


def rgsw_encrypt(m, key: RlweSecretKey, base_log: int, levels: int, rng: np.random.Generator,
                 noise_std: float = 0.0) -> RgswCiphertext:
    """RGSW encryption of a small integer (or small polynomial) ``m``."""
    params = key.params
    if params.limbs != 1:
        raise InvalidParameterError("RGSW is implemented for single-modulus rings")
    q = params.q
    mpoly = np.zeros(params.N, dtype=np.int64)
    if np.ndim(m) == 0:
        mpoly[0] = int(m)
    else:
        mpoly[:] = np.asarray(m, dtype=np.int64)
    rows = []
    g = gadget_weights(q, base_log, levels)
    for part in (0, 1):
        for j in range(levels):
            ct = rlwe_encrypt(np.zeros(params.N, dtype=np.int64), key, rng, noise_std)
            shift = mpoly * g[j] % q
            if part == 0:
                ct.a = (ct.a + shift) % q
            else:
                ct.b = (ct.b + shift) % q
            rows.append(ct)
    return RgswCiphertext(rows, base_log, levels, params)


def rgsw_trivial(m: int, params: RingParams, base_log: int, levels: int) -> RgswCiphertext:
    """Noiseless, mask-free RGSW encoding of the integer ``m``."""
    q = params.q
    g = gadget_weights(q, base_log, levels)
    rows = []
    for part in (0, 1):
        for j in range(levels):
            ct = RlweCiphertext.zero(params)
            if part == 0:
                ct.a[0] = m * g[j] % q
            else:
                ct.b[0] = m * g[j] % q
            rows.append(ct)
    return RgswCiphertext(rows, base_log, levels, params)
