"""Public and private functional key switching.

Public:  (0, f(b^1..b^p)) - sum_i sum_j a_hat[i, j] * KS[i, j]
Private: - sum_z sum_i sum_j c_hat[z, i, j] * KS_f[z, i, j]

where a_hat[i, j] is digit j of coefficient i of f(a^1..a^p) and c_hat[z, i, j]
is digit j of coefficient i of (a^z, b^z). Digits come from the balanced gadget
decomposition; with base_log = 1 they are plain bits.

These are the operators executed by the in-memory accumulators: the near-memory
side only ships the digits (n*t or p*(n+1)*t of them) to the DRAM chips, which
hold the key entries and sum the selected ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from apache_sim.errors import (
    InvalidParameterError,
    KeyKindError,
    ShapeError,
    UnsupportedFunctionError,
)
from apache_sim.kernels import ciphertexts as cts
from apache_sim.kernels.ciphertexts import LweCiphertext, LweSecretKey, RlweCiphertext, RlweSecretKey
from apache_sim.kernels.gadget import gadget_decompose, gadget_weights

PUBLIC = "public"
PRIVATE = "private"


@dataclass
class KeySwitchKey:
    """Key entries stored as flat arrays.

    Public: ``a`` is ``(n, t, n_out)`` and ``b`` is ``(n, t)``.
    Private: ``a``/``b`` are ``(p, n+1, t, n_out)``/``(p, n+1, t)`` for LWE
    output or ``(p, n+1, t, N)`` each for RLWE output.
    """

    a: np.ndarray
    b: np.ndarray
    t: int
    n: int
    base_log: int
    q: int
    kind: str = PUBLIC
    p: int = 1
    output: str = "lwe"
    ring: object = None  # RingParams for RLWE output

    def __post_init__(self):
        if self.t < 1:
            raise InvalidParameterError("decomposition depth t must be >= 1")
        if self.kind not in (PUBLIC, PRIVATE):
            raise InvalidParameterError(f"unknown key kind {self.kind!r}")

    @property
    def entries(self) -> int:
        return self.n * self.t if self.kind == PUBLIC else self.p * (self.n + 1) * self.t

    @property
    def nbytes(self) -> int:
        return int(self.a.nbytes + self.b.nbytes)


@dataclass
class KeySwitchResult:
    ciphertext: Union[LweCiphertext, RlweCiphertext]
    transmitted_bits: int


def pub_transmitted_bits(n: int, t: int) -> int:
    return n * t


def priv_transmitted_bits(p: int, n: int, t: int) -> int:
    return p * (n + 1) * t


def _linear_coeffs(f, p: int) -> list:
    """Resolve the supported plaintext maps to integer coefficients."""
    if isinstance(f, str):
        if f == "identity":
            if p != 1:
                raise UnsupportedFunctionError("identity takes exactly one ciphertext")
            return [1]
        if f == "sum":
            return [1] * p
        raise UnsupportedFunctionError(f"unsupported function {f!r}")
    if isinstance(f, (list, tuple)) and all(isinstance(c, (int, np.integer)) for c in f):
        if len(f) != p:
            raise ShapeError(f"{len(f)} coefficients for {p} ciphertexts")
        return [int(c) for c in f]
    raise UnsupportedFunctionError("only identity and fixed integer linear combinations are supported")


def _signed_dot(digits: np.ndarray, entries: np.ndarray, q: int, axes: int) -> np.ndarray:
    """sum over the leading ``axes`` axes of digits * entries, mod q, exactly."""
    count = int(np.prod(digits.shape)) if digits.size else 0
    bound = count * int(np.abs(digits).max(initial=0)) * q
    if bound < (1 << 62):
        return np.tensordot(digits.astype(np.int64), entries.astype(np.int64), axes=axes) % q
    out = np.tensordot(digits.astype(object), entries.astype(object), axes=axes) % q
    return out.astype(np.int64) if q <= (1 << 62) else out


def pub_ks_keygen(src: LweSecretKey, dst: LweSecretKey, base_log: int, t: int,
                  rng: np.random.Generator, noise_std: float = 0.0) -> KeySwitchKey:
    """KS[i, j] = LWE_dst(src_i * q / B^(j+1))."""
    q = src.q
    g = gadget_weights(q, base_log, t)
    n, m = src.n, dst.n
    a = rng.integers(0, q, (n, t, m), dtype=np.int64)
    e = cts.sample_gaussian(rng, noise_std, (n, t))
    msg = (src.s[:, None].astype(object) * np.array(g, dtype=object)[None, :])
    dots = np.tensordot(a.astype(object), dst.s.astype(object), axes=([2], [0]))
    b = ((dots + msg + e) % q).astype(np.int64)
    return KeySwitchKey(a, b, t, n, base_log, q, PUBLIC)


def pub_keyswitch(f, ks: KeySwitchKey, ciphertexts: Sequence[LweCiphertext]) -> KeySwitchResult:
    if ks.kind != PUBLIC:
        raise KeyKindError("pub_keyswitch needs a public key-switching key")
    cs = list(ciphertexts)
    if not cs:
        raise ShapeError("at least one ciphertext required")
    coeffs = _linear_coeffs(f, len(cs))
    q = ks.q
    for c in cs:
        if c.n != ks.n or c.q != q:
            raise ShapeError("ciphertext dimension or modulus does not match the key")
    a_comb = sum((c.a.astype(object) * k for c, k in zip(cs, coeffs)), np.zeros(ks.n, dtype=object)) % q
    b_comb = sum(c.b * k for c, k in zip(cs, coeffs)) % q
    digits = gadget_decompose(a_comb.astype(np.int64), ks.base_log, ks.t, q).digits.T  # (n, t)
    sa = _signed_dot(digits, ks.a, q, axes=([0, 1], [0, 1]))
    sb = int(_signed_dot(digits, ks.b, q, axes=([0, 1], [0, 1])))
    out = LweCiphertext((-sa) % q, (b_comb - sb) % q, q, cs[0].width)
    return KeySwitchResult(out, pub_transmitted_bits(ks.n, ks.t))


def priv_ks_keygen(src: LweSecretKey, dst: Union[LweSecretKey, RlweSecretKey], funcs: Sequence,
                   base_log: int, t: int, rng: np.random.Generator,
                   noise_std: float = 0.0) -> KeySwitchKey:
    """KS_f[z, i, j] = Enc_dst(f_z * sbar_i * q / B^(j+1)), sbar = (s, -1).

    ``funcs[z]`` is an integer (LWE output) or a length-N integer polynomial
    (RLWE output, e.g. the RLWE secret itself for circuit bootstrapping).
    """
    q = src.q
    g = np.array(gadget_weights(q, base_log, t), dtype=object)
    sbar = np.concatenate([src.s, [-1]]).astype(object)
    p, n = len(funcs), src.n
    if isinstance(dst, RlweSecretKey):
        ring = dst.params
        N = ring.N
        a = np.zeros((p, n + 1, t, N), dtype=np.int64)
        b = np.zeros((p, n + 1, t, N), dtype=np.int64)
        for z, fz in enumerate(funcs):
            fpoly = np.zeros(N, dtype=object)
            if np.ndim(fz) == 0:
                fpoly[0] = int(fz)
            else:
                fpoly[:] = np.asarray(fz, dtype=object)
            for i in range(n + 1):
                for j in range(t):
                    m = np.array([int(v) % q for v in fpoly * sbar[i] * g[j]], dtype=np.int64)
                    ct = cts.rlwe_encrypt(m, dst, rng, noise_std)
                    a[z, i, j], b[z, i, j] = ct.a, ct.b
        return KeySwitchKey(a, b, t, n, base_log, q, PRIVATE, p, "rlwe", ring)
    m_out = dst.n
    a = rng.integers(0, q, (p, n + 1, t, m_out), dtype=np.int64)
    e = cts.sample_gaussian(rng, noise_std, (p, n + 1, t))
    f = np.array([int(v) for v in funcs], dtype=object)
    msg = f[:, None, None] * sbar[None, :, None] * g[None, None, :]
    dots = np.tensordot(a.astype(object), dst.s.astype(object), axes=([3], [0]))
    b = ((dots + msg + e) % q).astype(np.int64)
    return KeySwitchKey(a, b, t, n, base_log, q, PRIVATE, p, "lwe")


def priv_keyswitch(ksf: KeySwitchKey, ciphertexts: Sequence[LweCiphertext]) -> KeySwitchResult:
    if ksf.kind != PRIVATE:
        raise KeyKindError("priv_keyswitch needs a private key-switching key")
    cs = list(ciphertexts)
    if len(cs) != ksf.p:
        raise ShapeError(f"key expects p={ksf.p} ciphertexts, got {len(cs)}")
    q = ksf.q
    for c in cs:
        if c.n != ksf.n or c.q != q:
            raise ShapeError("ciphertext dimension or modulus does not match the key")
    coeffs = np.stack([np.concatenate([c.a, [c.b]]) for c in cs])  # (p, n+1)
    digits = np.moveaxis(gadget_decompose(coeffs, ksf.base_log, ksf.t, q).digits, -2, -1)  # (p, n+1, t)
    sa = _signed_dot(digits, ksf.a, q, axes=3)
    sb = _signed_dot(digits, ksf.b, q, axes=3)
    bits = priv_transmitted_bits(ksf.p, ksf.n, ksf.t)
    if ksf.output == "rlwe":
        return KeySwitchResult(RlweCiphertext((-sa) % q, (-sb) % q, ksf.ring), bits)
    return KeySwitchResult(LweCiphertext((-sa) % q, int(-sb) % q, q, cs[0].width), bits)
