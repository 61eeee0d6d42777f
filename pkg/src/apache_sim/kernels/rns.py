"""Leveled RLWE arithmetic over RNS limbs (CKKS/BFV-style operators).

Covers HAdd, PMult, CMult (tensor + relinearisation) and HRot (slot
automorphism + key switch) at the ciphertext level. Encoding, rescaling and
bootstrapping are not modeled functionally.

Key switching decomposes every limb residue [c]_{p_i} into unsigned base-B
digits; key entry (i, j) encrypts s' * B^j * Qhat_i * [Qhat_i^{-1}]_{p_i}, so
the digit sum recomposes c exactly modulo Q by the CRT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from apache_sim.errors import ShapeError
from apache_sim.kernels import ciphertexts as cts
from apache_sim.kernels.automorphism import ckks_map
from apache_sim.kernels.ciphertexts import RlweCiphertext, RlweSecretKey
from apache_sim.kernels.ntt import ntt_forward, ntt_inverse
from apache_sim.kernels.ring import RingParams


def _moduli_col(params: RingParams) -> np.ndarray:
    return np.array(params.moduli, dtype=np.uint64)[:, None]


def _same(c1: RlweCiphertext, c2: RlweCiphertext) -> None:
    if c1.params != c2.params:
        raise ShapeError("ciphertexts live in different rings")


def ring_mul(x: np.ndarray, y: np.ndarray, params: RingParams) -> np.ndarray:
    """Full product of two RNS polynomials, limb by limb."""
    out = np.empty_like(x)
    for i, p in enumerate(params.moduli):
        out[i] = ntt_inverse(ntt_forward(x[i], p) * ntt_forward(y[i], p) % p, p)
    return out


def hadd(c1: RlweCiphertext, c2: RlweCiphertext) -> RlweCiphertext:
    _same(c1, c2)
    p = _moduli_col(c1.params)
    return RlweCiphertext((c1.a + c2.a) % p, (c1.b + c2.b) % p, c1.params, min(c1.level, c2.level))


def pmult(ct: RlweCiphertext, plain) -> RlweCiphertext:
    """Multiply by a plaintext polynomial (signed integer coefficients)."""
    pt = cts.reduce_poly(np.asarray(plain), ct.params)
    return RlweCiphertext(ring_mul(ct.a, pt, ct.params), ring_mul(ct.b, pt, ct.params), ct.params, ct.level)


@dataclass
class RnsSwitchKey:
    ntt: list  # per limb k: (limbs*digits, 2, N) NTT-domain entries under prime k
    base_log: int
    digits: int
    params: RingParams


def _digit_count(params: RingParams, base_log: int) -> int:
    return -(-max(p.bit_length() for p in params.moduli) // base_log)


def switch_keygen(target, key: RlweSecretKey, rng: np.random.Generator, base_log: int = 8,
                  noise_std: float = 3.2) -> RnsSwitchKey:
    """Key that turns c into an encryption of c * target under ``key``.

    ``target`` is an integer polynomial (Python ints allowed).
    """
    params = key.params
    Q = params.q
    nd = _digit_count(params, base_log)
    target = np.asarray(target, dtype=object)
    entries = []
    for i, p in enumerate(params.moduli):
        qhat = Q // p
        w0 = qhat * pow(qhat, -1, p) % Q
        for j in range(nd):
            w = w0 * (1 << (base_log * j)) % Q
            ct = cts.rlwe_encrypt(target * w % Q, key, rng, noise_std)
            entries.append((ct.a, ct.b))
    per_limb = []
    for k, pk in enumerate(params.moduli):
        arr = np.stack([np.stack([a[k], b[k]]) for a, b in entries])
        per_limb.append(ntt_forward(arr, pk))
    return RnsSwitchKey(per_limb, base_log, nd, params)


def _switch(c: np.ndarray, swk: RnsSwitchKey):
    """(x, y) with y - x*s ~= c * target."""
    params = swk.params
    B = 1 << swk.base_log
    digs = []
    for i in range(params.limbs):
        r = c[i].astype(np.int64)
        for _ in range(swk.digits):
            digs.append(r % B)
            r //= B
    D = np.stack(digs)  # (limbs*digits, N), entries < B
    out = np.empty((2,) + c.shape, dtype=np.uint64)
    for k, pk in enumerate(params.moduli):
        fd = ntt_forward(D.astype(np.uint64) % pk, pk)
        acc = (fd[:, None, :] * swk.ntt[k] % pk).sum(axis=0) % pk
        out[:, k] = ntt_inverse(acc, pk)
    return out[0], out[1]


def relin_keygen(key: RlweSecretKey, rng: np.random.Generator, base_log: int = 8,
                 noise_std: float = 3.2) -> RnsSwitchKey:
    sq = cts.exact_multiplier(key.params.N).mul(key.s, key.s).astype(object)
    return switch_keygen(sq, key, rng, base_log, noise_std)


def galois_element(steps: int, N: int) -> int:
    return pow(5, steps % (N // 2), 2 * N)


def rotation_keygen(steps: int, key: RlweSecretKey, rng: np.random.Generator, base_log: int = 8,
                    noise_std: float = 3.2) -> RnsSwitchKey:
    params = key.params
    k = galois_element(steps, params.N)
    s_k = np.zeros(params.N, dtype=object)
    i = np.arange(params.N)
    j = i * k % (2 * params.N)
    for src, dst in zip(i, j):
        if dst < params.N:
            s_k[dst] += int(key.s[src])
        else:
            s_k[dst - params.N] -= int(key.s[src])
    return switch_keygen(s_k, key, rng, base_log, noise_std)


def cmult(c1: RlweCiphertext, c2: RlweCiphertext, rlk: RnsSwitchKey) -> RlweCiphertext:
    _same(c1, c2)
    params = c1.params
    p = _moduli_col(params)
    d0 = ring_mul(c1.b, c2.b, params)
    d1 = (ring_mul(c1.a, c2.b, params) + ring_mul(c2.a, c1.b, params)) % p
    d2 = ring_mul(c1.a, c2.a, params)
    x, y = _switch(d2, rlk)
    return RlweCiphertext((d1 + x) % p, (d0 + y) % p, params, min(c1.level, c2.level))


def hrot(ct: RlweCiphertext, steps: int, rtk: RnsSwitchKey) -> RlweCiphertext:
    params = ct.params
    k = galois_element(steps, params.N)
    a = ckks_map(ct.a, k, params)
    b = ckks_map(ct.b, k, params)
    x, y = _switch(a, rtk)
    p = _moduli_col(params)
    return RlweCiphertext((p - x) % p, (b + p - y) % p, params, ct.level)
