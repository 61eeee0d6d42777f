"""Bit-exact execution of trace nodes on the toy parameter sets.

Keys are generated lazily from one seed. Input ciphertexts are encrypted in
trace order before any node runs, and every operator is deterministic, so
results do not depend on the order or placement chosen by the scheduler.
Alongside each ciphertext the context tracks the plaintext it should decrypt
to; ``verify`` compares the two.

CKKS-style values are integer coefficient vectors scaled by DELTA (no
canonical-embedding encoder); one multiplication level is supported.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from typing import Dict, List

import numpy as np

from apache_sim import serialize
from apache_sim.errors import InvalidParameterError, RoutingError, ShapeError
from apache_sim.kernels import ciphertexts as cts
from apache_sim.kernels import rns, tfhe
from apache_sim.kernels.automorphism import ckks_map
from apache_sim.kernels.cboot import cboot_keygen, circuit_bootstrap
from apache_sim.kernels.ciphertexts import LweCiphertext, RlweCiphertext
from apache_sim.kernels.keyswitch import priv_keyswitch, pub_keyswitch
from apache_sim.kernels.packing import pack_keygen, pack_lwe_to_rlwe
from apache_sim.kernels.ring import CKKS_TOY

DELTA = 1 << 20
TOY_TFHE = tfhe.TfheParams(rlwe_noise=4.0)  # low BK noise leaves room for circuit bootstrapping

GATES = {
    "NAND": lambda a, b: 1 - (a & b),
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
    "NOR": lambda a, b: 1 - (a | b),
    "XOR": lambda a, b: a ^ b,
}


# keys depend only on the seed; cached so repeated runs skip key generation
@lru_cache(maxsize=4)
def _tfhe_keys(seed: int):
    return tfhe.tfhe_keygen(TOY_TFHE, np.random.default_rng([seed, 1]))


@lru_cache(maxsize=4)
def _cb_key(seed: int):
    return cboot_keygen(_tfhe_keys(seed), 4, 4, np.random.default_rng([seed, 2]))


def digest(ct) -> str:
    return hashlib.sha256(serialize.dumps(ct)).hexdigest()


class FunctionalContext:
    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.store: Dict[str, object] = {}
        self.plain: Dict[str, object] = {}
        self.scale: Dict[str, int] = {}  # CKKS scale exponent
        self.big: set = set()  # LWE ids under the extracted ring key
        self._tfhe = None
        self._cbk = None
        self._pack = None
        self._ckks = None
        self._rot: Dict[int, object] = {}

    # -- keys ------------------------------------------------------------------------

    @property
    def tfhe_keys(self) -> tfhe.TfheKeys:
        if self._tfhe is None:
            self._tfhe = _tfhe_keys(self.seed)
        return self._tfhe

    @property
    def cb_key(self):
        if self._cbk is None:
            self._cbk = _cb_key(self.seed)
        return self._cbk

    @property
    def pack_key(self):
        if self._pack is None:
            k = self.tfhe_keys
            self._pack = pack_keygen(k.rlwe.as_lwe_key(), k.rlwe, 8, 3, np.random.default_rng([self.seed, 3]), 16.0)
        return self._pack

    @property
    def ckks(self):
        if self._ckks is None:
            rng = np.random.default_rng([self.seed, 4])
            key = cts.rlwe_keygen(CKKS_TOY, rng, ternary=True)
            self._ckks = (key, rns.relin_keygen(key, rng))
        return self._ckks

    def rot_key(self, steps: int):
        if steps not in self._rot:
            self._rot[steps] = rns.rotation_keygen(steps, self.ckks[0], np.random.default_rng([self.seed, 5, steps]))
        return self._rot[steps]

    # -- inputs ------------------------------------------------------------------------

    def make_input(self, rec: dict) -> None:
        params = rec.get("params", {})
        kind = params.get("type", "bit")
        q = TOY_TFHE.q
        for ct_id in rec.get("outputs") or [rec["id"]]:
            if kind == "bit":
                v = int(params.get("value", 0)) & 1
                ct = tfhe.encrypt_bit(v, self.tfhe_keys, self.rng)
            elif kind == "bit_big":  # under the extracted ring key
                v = int(params.get("value", 0)) & 1
                ct = cts.lwe_encrypt(cts.encode_bit(v, q), self.tfhe_keys.rlwe.as_lwe_key(), self.rng, 2.0 ** 8)
                self.big.add(ct_id)
            elif kind == "rlwe_bit":
                v = int(params.get("value", 0)) & 1
                m = np.zeros(TOY_TFHE.N, dtype=np.int64)
                m[0] = cts.encode_bit(v, q)
                ct = cts.rlwe_encrypt(m, self.tfhe_keys.rlwe, self.rng, 2.0 ** 8)
            elif kind == "ckks":
                vals = np.zeros(CKKS_TOY.N, dtype=np.int64)
                given = np.asarray(params.get("values", [0]), dtype=np.int64)
                vals[: len(given)] = given
                v = vals
                ct = cts.rlwe_encrypt(vals * DELTA, self.ckks[0], self.rng, 3.2)
                self.scale[ct_id] = 1
            else:
                raise InvalidParameterError(f"unknown input type {kind!r}")
            self.store[ct_id] = ct
            self.plain[ct_id] = v

    # -- operators -------------------------------------------------------------------------

    def execute(self, node, inputs: List[object]) -> List[object]:
        """Run one node; ``inputs`` are the ciphertexts named by node.inputs."""
        op, p = node.op, node.params
        pv = [self.plain[c] for c in node.inputs]
        outs = node.outputs
        if op == "HomGate":
            gate = p.get("gate", "NAND")
            if gate not in GATES:
                raise InvalidParameterError(f"unknown gate {gate!r}")
            res = tfhe.hom_gate_batch(gate, [tuple(inputs[:2])], self.tfhe_keys)[0]
            self._set(outs[0], res, GATES[gate](pv[0], pv[1]))
        elif op == "CBoot":
            res = circuit_bootstrap(inputs[0], self.tfhe_keys, self.cb_key)
            self._set(outs[0], res, pv[0])
        elif op == "CMUX":
            sel, c1, c0 = inputs
            res = tfhe.cmux(sel, c1, c0)
            self._set(outs[0], res, pv[1] if pv[0] else pv[2])
        elif op == "SampleExtract":
            res = tfhe.sample_extract(inputs[0], int(p.get("index", 0)))
            self.big.add(outs[0])
            self._set(outs[0], res, pv[0])
        elif op == "PubKS":
            res = pub_keyswitch("identity", self.tfhe_keys.ksk, [inputs[0]]).ciphertext
            self._set(outs[0], res, pv[0])
        elif op == "PrivKS":
            res = priv_keyswitch(self.cb_key.body, [inputs[0]]).ciphertext
            self._set(outs[0], res, pv[0])
        elif op == "Pack":
            res = pack_lwe_to_rlwe(inputs, self.pack_key)
            self._set(outs[0], res, list(pv))
        elif op == "HAdd":
            if self.scale[node.inputs[0]] != self.scale[node.inputs[1]]:
                raise ShapeError("HAdd operands at different scales")
            self._set(outs[0], rns.hadd(inputs[0], inputs[1]), pv[0] + pv[1], self.scale[node.inputs[0]])
        elif op == "PMult":
            plain = self._plain_poly(p)
            res = rns.pmult(inputs[0], plain)
            self._set(outs[0], res, _negacyclic(pv[0], plain), self.scale[node.inputs[0]])
        elif op == "CMult":
            e = self.scale[node.inputs[0]] + self.scale[node.inputs[1]]
            res = rns.cmult(inputs[0], inputs[1], self.ckks[1])
            self._set(outs[0], res, _negacyclic(pv[0], pv[1]), e)
        elif op == "HRot":
            steps = int(p.get("steps", 1))
            res = rns.hrot(inputs[0], steps, self.rot_key(steps))
            k = rns.galois_element(steps, CKKS_TOY.N)
            self._set(outs[0], res, _signed_map(pv[0], k), self.scale[node.inputs[0]])
        else:
            raise RoutingError(f"no functional model for {op!r}")
        return [self.store[c] for c in outs]

    def _set(self, ct_id, ct, plain, scale=None):
        self.store[ct_id] = ct
        self.plain[ct_id] = plain
        if scale is not None:
            self.scale[ct_id] = scale

    def _plain_poly(self, params) -> np.ndarray:
        out = np.zeros(CKKS_TOY.N, dtype=np.int64)
        vals = np.asarray(params.get("plain", [1]), dtype=np.int64)
        out[: len(vals)] = vals
        return out

    # -- checking ----------------------------------------------------------------------------

    def decrypt(self, ct_id: str):
        ct = self.store[ct_id]
        k = self.tfhe_keys if self._tfhe is not None else None
        if isinstance(ct, LweCiphertext):
            key = k.rlwe.as_lwe_key() if ct_id in self.big else k.lwe
            return tfhe.decrypt_bit(ct, key)
        if isinstance(ct, cts.RgswCiphertext):
            # a CMUX between trivial encodings of 0 and 1 reveals the selector
            q = ct.params.q
            one = RlweCiphertext.trivial(_const(ct.params.N, cts.encode_bit(1, q)), ct.params)
            zero = RlweCiphertext.trivial(_const(ct.params.N, cts.encode_bit(0, q)), ct.params)
            return cts.decode_bit(int(cts.rlwe_phase(tfhe.cmux(ct, one, zero), k.rlwe)[0]), q)
        if isinstance(ct, RlweCiphertext):
            if ct_id in self.scale:
                raw = cts.rlwe_decrypt(ct, self.ckks[0])
                d = DELTA ** self.scale[ct_id]
                return np.array([(int(v) + d // 2) // d for v in raw], dtype=np.int64)
            ph = cts.rlwe_phase(ct, k.rlwe)
            plain = self.plain[ct_id]
            if isinstance(plain, list):
                return [cts.decode_bit(int(ph[z]), ct.params.q) for z in range(len(plain))]
            return cts.decode_bit(int(ph[0]), ct.params.q)
        raise InvalidParameterError(f"cannot decrypt {type(ct).__name__}")

    def verify(self, ct_ids) -> List[str]:
        failures = []
        for c in ct_ids:
            got, want = self.decrypt(c), self.plain[c]
            ok = np.array_equal(np.asarray(got), np.asarray(want))
            if not ok:
                failures.append(c)
        return failures

    def digests(self, ct_ids) -> Dict[str, str]:
        return {c: digest(self.store[c]) for c in ct_ids}


def _const(N: int, v: int) -> np.ndarray:
    m = np.zeros(N, dtype=np.int64)
    m[0] = v
    return m


def _negacyclic(a, b) -> np.ndarray:
    """Exact negacyclic product of two small integer vectors."""
    N = len(a)
    full = np.convolve(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
    out = full[:N].copy()
    out[: len(full) - N] -= full[N:]
    return out


def _signed_map(v, k: int) -> np.ndarray:
    N = len(v)
    i = np.arange(N)
    j = i * k % (2 * N)
    out = np.zeros(N, dtype=np.int64)
    out[np.where(j < N, j, j - N)] = np.where(j < N, v, -np.asarray(v))
    return out
