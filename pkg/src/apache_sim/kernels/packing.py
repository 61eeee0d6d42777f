"""Pack a batch of LWE ciphertexts into one RLWE ciphertext.

LWE ciphertext z lands in coefficient slot z. The packing key holds RLWE
encryptions of s_i * q/B^(j+1) (constant polynomials); the digits of every
input mask are gathered into digit polynomials D_ij(X) = sum_z d^z_ij X^z, so
the whole batch costs n*levels ring products instead of t*n*levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from apache_sim.errors import CapacityError, ShapeError
from apache_sim.kernels import ciphertexts as cts
from apache_sim.kernels.ciphertexts import LweCiphertext, LweSecretKey, RlweCiphertext, RlweSecretKey
from apache_sim.kernels.gadget import gadget_decompose, gadget_weights
from apache_sim.kernels.ntt import centered
from apache_sim.kernels.ring import RingParams


@dataclass
class PackingKey:
    ntt: np.ndarray  # (2 primes, n*levels, 2, N)
    n: int
    base_log: int
    levels: int
    ring: RingParams


def pack_keygen(src: LweSecretKey, dst: RlweSecretKey, base_log: int, levels: int,
                rng: np.random.Generator, noise_std: float = 0.0) -> PackingKey:
    ring = dst.params
    g = gadget_weights(ring.q, base_log, levels)
    rows = []
    for s_i in src.s:
        for j in range(levels):
            m = np.zeros(ring.N, dtype=np.int64)
            m[0] = int(s_i) * g[j] % ring.q
            ct = cts.rlwe_encrypt(m, dst, rng, noise_std)
            rows.append(np.stack([ct.a, ct.b]))
    mult = cts.exact_multiplier(ring.N)
    return PackingKey(mult.forward(centered(np.stack(rows), ring.q)), src.n, base_log, levels, ring)


def pack_lwe_to_rlwe(ciphertexts: Sequence[LweCiphertext], packing_key: PackingKey) -> RlweCiphertext:
    ring = packing_key.ring
    N, q = ring.N, ring.q
    cs = list(ciphertexts)
    t = len(cs)
    if t > N:
        raise CapacityError(f"cannot pack {t} ciphertexts into {N} slots")
    if t == 0:
        return RlweCiphertext.zero(ring)
    n, lv = packing_key.n, packing_key.levels
    if any(c.n != n or c.q != q for c in cs):
        raise ShapeError("LWE parameters do not match the packing key")
    masks = np.stack([c.a for c in cs])  # (t, n)
    d = gadget_decompose(masks, packing_key.base_log, lv, q).digits  # (t, levels, n)
    D = np.zeros((n, lv, N), dtype=np.int64)
    D[:, :, :t] = np.transpose(d, (2, 1, 0))
    mult = cts.exact_multiplier(N)
    fd = mult.forward(D.reshape(n * lv, N))  # (2, n*lv, N)
    p = np.array(mult.primes, dtype=np.uint64).reshape(2, 1, 1, 1)
    prod = fd[:, :, None, :] * packing_key.ntt % p
    acc = prod.sum(axis=1) % p.reshape(2, 1, 1)
    s = mult.inverse(acc) % q  # (2, N)
    body = np.zeros(N, dtype=np.int64)
    body[:t] = [c.b for c in cs]
    return RlweCiphertext((-s[0]) % q, (body - s[1]) % q, ring)
