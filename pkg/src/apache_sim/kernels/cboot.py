"""Circuit bootstrapping: LWE bit -> RGSW bit.

For every gadget level j a sign-bootstrap produces an LWE encryption of
m*g_j under the extracted ring key; two private key switches then lift it
into the RGSW rows (f = -s for the mask row, f = 1 for the body row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from apache_sim.errors import InvalidParameterError
from apache_sim.kernels.ciphertexts import LweCiphertext, RgswCiphertext
from apache_sim.kernels.gadget import gadget_weights
from apache_sim.kernels.keyswitch import KeySwitchKey, priv_keyswitch, priv_ks_keygen
from apache_sim.kernels.tfhe import TfheKeys, bootstrap_batch


@dataclass
class CircuitBootstrapKey:
    mask: KeySwitchKey
    body: KeySwitchKey
    base_log: int
    levels: int


def cboot_keygen(keys: TfheKeys, base_log: int, levels: int, rng: np.random.Generator,
                 ks_base_log: int = 8, ks_levels: int = 3, noise_std: float = 16.0) -> CircuitBootstrapKey:
    if base_log * levels > keys.params.q.bit_length() - 1:
        raise InvalidParameterError("base_log*levels exceeds the modulus width")
    src = keys.rlwe.as_lwe_key()
    neg_s = -keys.rlwe.s.astype(np.int64)
    mask = priv_ks_keygen(src, keys.rlwe, [neg_s], ks_base_log, ks_levels, rng, noise_std)
    body = priv_ks_keygen(src, keys.rlwe, [1], ks_base_log, ks_levels, rng, noise_std)
    return CircuitBootstrapKey(mask, body, base_log, levels)


def circuit_bootstrap(ct: LweCiphertext, keys: TfheKeys, cbk: CircuitBootstrapKey) -> RgswCiphertext:
    """``ct`` encrypts a bit as +-q/8 under the LWE key."""
    q = keys.params.q
    g = gadget_weights(q, cbk.base_log, cbk.levels)
    masks, bodies = [], []
    for gj in g:
        mu = gj // 2
        lwe = bootstrap_batch([ct], keys, mu=mu, keyswitch=False)[0]
        lwe = LweCiphertext(lwe.a, (lwe.b + mu) % q, q, lwe.width)  # 0 or g_j
        masks.append(priv_keyswitch(cbk.mask, [lwe]).ciphertext)
        bodies.append(priv_keyswitch(cbk.body, [lwe]).ciphertext)
    return RgswCiphertext(masks + bodies, cbk.base_log, cbk.levels, keys.params.ring)
