import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from apache_sim import serialize
from apache_sim.errors import FormatError
from apache_sim.kernels import ciphertexts as C
from apache_sim.kernels.ring import CKKS_TOY, RingParams, TFHE_TOY


def test_lwe_layout():
    ct = C.LweCiphertext(np.array([1, 2, 3]), 7)
    raw = serialize.dumps(ct)
    assert raw[:4] == b"APCH"
    assert struct.unpack_from("<HBB", raw, 4) == (1, 1, 4)
    assert struct.unpack_from("<IQ", raw, 8) == (3, 1 << 32)
    assert np.frombuffer(raw[20:], "<u4").tolist() == [1, 2, 3, 7]
    assert serialize.loads(raw) == ct


@given(st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=64), st.integers(0, 2**32 - 1))
def test_lwe_roundtrip(a, b):
    ct = C.LweCiphertext(np.array(a), b)
    assert serialize.loads(serialize.dumps(ct)) == ct


def test_rlwe_roundtrips(rng, tmp_path):
    for params in (TFHE_TOY, CKKS_TOY):
        key = C.rlwe_keygen(params, rng)
        ct = C.rlwe_encrypt(np.arange(params.N), key, rng)
        ct.level = 1
        back = serialize.loads(serialize.dumps(ct))
        assert back == ct and back.level == 1
    path = tmp_path / "ct.apch"
    serialize.save(path, ct)
    assert serialize.load(path) == ct


def test_rgsw_roundtrip(rng):
    key = C.rlwe_keygen(RingParams(N=32, q=1 << 32), rng)
    g = C.rgsw_encrypt(1, key, 7, 3, rng, 4.0)
    back = serialize.loads(serialize.dumps(g))
    assert np.array_equal(back.as_array(), g.as_array())
    assert (back.base_log, back.levels) == (7, 3)


def test_wide_modulus_uses_u64():
    ct = C.LweCiphertext(np.array([5]), 1, q=1 << 40, width=64)
    raw = serialize.dumps(ct)
    assert raw[7] == 8
    assert serialize.loads(raw) == ct


@pytest.mark.parametrize("mutate", [
    lambda r: b"XXXX" + r[4:],
    lambda r: r[:-1],
    lambda r: r + b"\0",
    lambda r: r[:4] + struct.pack("<H", 9) + r[6:],
    lambda r: r[:6] + bytes([9]) + r[7:],
    lambda r: r[:7] + bytes([3]) + r[8:],
])
def test_malformed(mutate):
    raw = serialize.dumps(C.LweCiphertext(np.array([1, 2]), 3))
    with pytest.raises(FormatError):
        serialize.loads(mutate(raw))


def test_unknown_object():
    with pytest.raises(FormatError):
        serialize.dumps("not a ciphertext")
