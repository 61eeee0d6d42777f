"""External product, CMUX, blind rotation and gate bootstrapping.

Follows the CMUX dataflow Decomp -> NTT -> MMult -> MAdd -> INTT: the RLWE
difference is gadget-decomposed, the digit polynomials are transformed,
multiplied pointwise with the RGSW rows (kept in the NTT domain), accumulated
and transformed back. Because q = 2^32 is not NTT-friendly the transforms run
over two auxiliary 31-bit primes and the exact integer result is rebuilt by CRT
before reduction mod q.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from apache_sim.errors import InvalidParameterError, ShapeError
from apache_sim.kernels import ciphertexts as cts
from apache_sim.kernels.automorphism import rotate_sub
from apache_sim.kernels.ciphertexts import (
    LweCiphertext,
    LweSecretKey,
    RgswCiphertext,
    RlweCiphertext,
    RlweSecretKey,
)
from apache_sim.kernels.gadget import gadget_decompose
from apache_sim.kernels.ntt import centered
from apache_sim.kernels.ring import RingParams


def _digits(diff: np.ndarray, base_log: int, levels: int, q: int) -> np.ndarray:
    """(B, 2, N) ciphertext pair -> (B, 2*levels, N) digit polys ordered
    [mask digits..., body digits...] to line up with the RGSW rows."""
    d = gadget_decompose(diff, base_log, levels, q).digits  # (B, 2, levels, N)
    return d.reshape(d.shape[0], 2 * levels, d.shape[-1])


def _external_product_batch(diff: np.ndarray, rgsw_ntt: np.ndarray, base_log: int, levels: int,
                            q: int) -> np.ndarray:
    """RGSW (x) RLWE for a batch of ciphertext pairs ``diff`` of shape (B, 2, N).

    ``rgsw_ntt`` is ``(2, 2*levels, 2, N)`` (shared selector) or
    ``(2, B, 2*levels, 2, N)`` (one selector per batch element).
    """
    mult = cts.exact_multiplier(diff.shape[-1])
    fd = mult.forward(_digits(diff, base_log, levels, q))  # (2, B, 2l, N)
    if rgsw_ntt.ndim == 4:
        rgsw_ntt = rgsw_ntt[:, None]
    p = np.array(mult.primes, dtype=np.uint64).reshape(2, 1, 1, 1, 1)
    prod = fd[:, :, :, None, :] * rgsw_ntt % p  # (2, B, 2l, 2, N)
    acc = prod.sum(axis=2) % p.reshape(2, 1, 1, 1)
    return mult.inverse(acc) % q


def external_product(rgsw: RgswCiphertext, ct: RlweCiphertext) -> RlweCiphertext:
    _check_pair(rgsw, ct)
    mult = cts.exact_multiplier(ct.N)
    out = _external_product_batch(np.stack([ct.a, ct.b])[None], rgsw.ntt_form(mult),
                                  rgsw.base_log, rgsw.levels, ct.params.q)[0]
    return RlweCiphertext(out[0], out[1], ct.params, ct.level)


def _check_pair(rgsw: RgswCiphertext, ct: RlweCiphertext) -> None:
    if rgsw.params != ct.params:
        raise ShapeError("RGSW and RLWE ring parameters differ")
    if ct.params.limbs != 1:
        raise InvalidParameterError("external product needs a single-modulus ring")


def cmux(selector: RgswCiphertext, c1: RlweCiphertext, c0: RlweCiphertext) -> RlweCiphertext:
    """c0 + selector (x) (c1 - c0): selects c1 when the selector encrypts 1."""
    if c1.params != c0.params:
        raise ShapeError("CMUX inputs use different ring parameters")
    _check_pair(selector, c0)
    q = c0.params.q
    diff = np.stack([(c1.a - c0.a) % q, (c1.b - c0.b) % q])[None]
    mult = cts.exact_multiplier(c0.N)
    prod = _external_product_batch(diff, selector.ntt_form(mult), selector.base_log,
                                   selector.levels, q)[0]
    return RlweCiphertext((c0.a + prod[0]) % q, (c0.b + prod[1]) % q, c0.params, c0.level)


# -- blind rotation --------------------------------------------------------------

@dataclass
class BootstrapKey:
    rgsw: Sequence[RgswCiphertext]
    params: RingParams

    def __post_init__(self):
        self._stack = None

    @property
    def base_log(self) -> int:
        return self.rgsw[0].base_log if self.rgsw else 0

    @property
    def levels(self) -> int:
        return self.rgsw[0].levels if self.rgsw else 0

    def ntt_stack(self) -> np.ndarray:
        if self._stack is None:
            mult = cts.exact_multiplier(self.params.N)
            self._stack = np.stack([g.ntt_form(mult) for g in self.rgsw])  # (n, 2, 2l, 2, N)
        return self._stack


def modswitch(values, q: int, two_n: int) -> np.ndarray:
    """round(v * 2N / q) mod 2N."""
    v = np.asarray(values, dtype=object)
    return np.array((v * two_n * 2 + q) // (2 * q) % two_n, dtype=np.int64).reshape(np.shape(values))


def _blind_rotate_batch(acc: np.ndarray, a_tilde: np.ndarray, b_tilde: np.ndarray,
                        bsk: BootstrapKey, q: int) -> np.ndarray:
    """acc: (B, 2, N) accumulators (already initialised), a_tilde: (B, n)."""
    N = acc.shape[-1]
    # ACC <- X^{b} * ACC
    acc = (acc + rotate_sub(acc, (2 * N - b_tilde) % (2 * N), q)) % q
    if a_tilde.shape[1] == 0:
        return acc
    keys = bsk.ntt_stack()
    for i in range(a_tilde.shape[1]):
        diff = rotate_sub(acc, a_tilde[:, i], q)  # X^{-a_i} ACC - ACC
        acc = (acc + _external_product_batch(diff, keys[i], bsk.base_log, bsk.levels, q)) % q
    return acc


def blind_rotate(acc_init: RlweCiphertext, lwe_in: LweCiphertext,
                 bootstrap_keys: Sequence[RgswCiphertext] | BootstrapKey) -> RlweCiphertext:
    """Rotate ``acc_init`` by X^{b - sum a_i s_i} (after switching to Z_2N).

    Returns an RLWE encryption of X^{phase} * acc_init.
    """
    bsk = bootstrap_keys if isinstance(bootstrap_keys, BootstrapKey) else BootstrapKey(
        list(bootstrap_keys), acc_init.params)
    if len(bsk.rgsw) != lwe_in.n:
        raise ShapeError(f"{len(bsk.rgsw)} bootstrap keys for LWE dimension {lwe_in.n}")
    p = acc_init.params
    two_n = 2 * p.N
    a_t = modswitch(lwe_in.a, lwe_in.q, two_n)[None]
    b_t = modswitch([lwe_in.b], lwe_in.q, two_n)
    out = _blind_rotate_batch(np.stack([acc_init.a, acc_init.b])[None], a_t, b_t, bsk, p.q)[0]
    return RlweCiphertext(out[0], out[1], p, acc_init.level)


def sample_extract(ct: RlweCiphertext, index: int = 0) -> LweCiphertext:
    """LWE encryption of coefficient ``index`` under the RLWE key's coefficients."""
    N, q = ct.N, ct.params.q
    a = ct.a
    # coeff_index(a*s) = sum_{j<=i} a_{i-j} s_j - sum_{j>i} a_{N+i-j} s_j
    j = np.arange(N)
    src = (index - j) % N
    sign = np.where(j <= index, 1, -1)
    return LweCiphertext(a[src] * sign % q, int(ct.b[index]), q)


def _extract_batch(acc: np.ndarray, q: int):
    N = acc.shape[-1]
    j = np.arange(N)
    src = (-j) % N
    sign = np.where(j == 0, 1, -1)
    return acc[:, 0, src] * sign % q, acc[:, 1, 0]


def rotation_polynomial(N: int, mu: int, q: int) -> np.ndarray:
    """mu * (1 - X - X^2 - ... - X^{N-1}): constant term of X^k * tv is +mu for
    k in [0, N) and -mu for k in [N, 2N)."""
    tv = np.full(N, (-mu) % q, dtype=np.int64)
    tv[0] = mu % q
    return tv


# -- gate bootstrapping --------------------------------------------------------

@dataclass(frozen=True)
class TfheParams:
    n: int = 512
    N: int = 512
    q: int = 1 << 32
    bk_base_log: int = 7
    bk_levels: int = 3
    ks_base_log: int = 4
    ks_levels: int = 4
    lwe_noise: float = 2.0 ** 15
    rlwe_noise: float = 2.0 ** 8
    ks_noise: float = 2.0 ** 13

    @property
    def ring(self) -> RingParams:
        return RingParams(N=self.N, q=self.q)


@dataclass
class TfheKeys:
    params: TfheParams
    lwe: LweSecretKey
    rlwe: RlweSecretKey
    bsk: BootstrapKey
    ksk: "object"  # KeySwitchKey from extracted key back to ``lwe``


def tfhe_keygen(params: TfheParams, rng: np.random.Generator, with_ksk: bool = True) -> TfheKeys:
    from apache_sim.kernels.keyswitch import pub_ks_keygen

    ring = params.ring
    lwe_key = cts.lwe_keygen(params.n, rng, params.q)
    rlwe_key = cts.rlwe_keygen(ring, rng)
    bsk = BootstrapKey([cts.rgsw_encrypt(int(s), rlwe_key, params.bk_base_log, params.bk_levels, rng,
                                         params.rlwe_noise) for s in lwe_key.s], ring)
    ksk = None
    if with_ksk:
        ksk = pub_ks_keygen(rlwe_key.as_lwe_key(), lwe_key, params.ks_base_log, params.ks_levels, rng,
                            params.ks_noise)
    return TfheKeys(params, lwe_key, rlwe_key, bsk, ksk)


def encrypt_bit(bit: int, keys: TfheKeys, rng: np.random.Generator) -> LweCiphertext:
    return cts.lwe_encrypt(cts.encode_bit(bit, keys.params.q), keys.lwe, rng, keys.params.lwe_noise)


def decrypt_bit(ct: LweCiphertext, key: LweSecretKey) -> int:
    return cts.decode_bit(cts.lwe_phase(ct, key), ct.q)


def bootstrap_batch(inputs: Sequence[LweCiphertext], keys: TfheKeys, mu: int | None = None,
                    keyswitch: bool = True) -> list:
    """Sign-bootstrap each input: output encrypts +mu if its phase is in
    [0, q/2) and -mu otherwise. Inputs are processed in lockstep."""
    from apache_sim.kernels.keyswitch import pub_keyswitch

    p = keys.params
    if not inputs:
        return []
    mu = p.q // 8 if mu is None else mu
    two_n = 2 * p.N
    a_t = modswitch(np.stack([c.a for c in inputs]), p.q, two_n)
    b_t = modswitch([c.b for c in inputs], p.q, two_n)
    tv = rotation_polynomial(p.N, mu, p.q)
    acc = np.zeros((len(inputs), 2, p.N), dtype=np.int64)
    acc[:, 1] = tv
    acc = _blind_rotate_batch(acc, a_t, b_t, keys.bsk, p.q)
    ea, eb = _extract_batch(acc, p.q)
    out = [LweCiphertext(ea[i], int(eb[i]), p.q) for i in range(len(inputs))]
    if keyswitch:
        out = [pub_keyswitch("identity", keys.ksk, [c]).ciphertext for c in out]
    return out


def hom_nand_batch(pairs: Sequence[tuple], keys: TfheKeys, keyswitch: bool = True) -> list:
    """Homomorphic NAND for a batch of (c1, c2) LWE pairs: bootstrap((0, q/8) - c1 - c2)."""
    q = keys.params.q
    lin = [LweCiphertext.trivial(c1.n, q // 8, q) - c1 - c2 for c1, c2 in pairs]
    return bootstrap_batch(lin, keys, keyswitch=keyswitch)


def hom_nand(c1: LweCiphertext, c2: LweCiphertext, keys: TfheKeys, keyswitch: bool = True) -> LweCiphertext:
    return hom_nand_batch([(c1, c2)], keys, keyswitch)[0]


def gate_linear(kind: str, c1: LweCiphertext, c2: LweCiphertext) -> LweCiphertext:
    """Pre-bootstrap linear combination for the standard two-input gates."""
    q = c1.q
    t = LweCiphertext.trivial
    if kind == "NAND":
        return t(c1.n, q // 8, q) - c1 - c2
    if kind == "AND":
        return t(c1.n, (-q // 8) % q, q) + c1 + c2
    if kind == "OR":
        return t(c1.n, q // 8, q) + c1 + c2
    if kind == "NOR":
        return t(c1.n, (-q // 8) % q, q) - c1 - c2
    if kind == "XOR":
        return t(c1.n, q // 4, q) + (c1 + c2).scale(2)
    raise InvalidParameterError(f"unsupported gate {kind!r}")


def hom_gate_batch(kind: str, pairs: Sequence[tuple], keys: TfheKeys, keyswitch: bool = True) -> list:
    return bootstrap_batch([gate_linear(kind, c1, c2) for c1, c2 in pairs], keys, keyswitch=keyswitch)
