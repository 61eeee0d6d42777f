import numpy as np
import pytest

from apache_sim.errors import CapacityError
from apache_sim.kernels import ciphertexts as C
from apache_sim.kernels.packing import pack_keygen, pack_lwe_to_rlwe
from apache_sim.kernels.ring import RingParams

Q = 1 << 32
RING = RingParams(N=64, q=Q)


@pytest.fixture(scope="module")
def setup():
    rng = np.random.default_rng(21)
    src = C.lwe_keygen(32, rng)
    dst = C.rlwe_keygen(RING, rng)
    return src, dst, pack_keygen(src, dst, 8, 3, rng, 4.0)


def _slots(ct, dst):
    ph = C.rlwe_decrypt(ct, dst).astype(np.int64)
    return ((ph + Q // 8) % Q) // (Q // 4)


def _encrypt(bits, src, rng):
    return [C.lwe_encrypt(int(b) << 30, src, rng, 16.0) for b in bits]


def test_single_zero(setup):
    src, dst, pk = setup
    out = pack_lwe_to_rlwe([C.LweCiphertext.trivial(32, 0)], pk)
    assert _slots(out, dst)[0] == 0


def test_four_slots(setup):
    src, dst, pk = setup
    rng = np.random.default_rng(1)
    out = pack_lwe_to_rlwe(_encrypt((1, 0, 1, 1), src, rng), pk)
    s = _slots(out, dst)
    assert list(s[:4]) == [1, 0, 1, 1]
    assert not s[4:].any()


def test_full_ring(setup):
    src, dst, pk = setup
    rng = np.random.default_rng(2)
    bits = rng.integers(0, 4, 64)
    out = pack_lwe_to_rlwe(_encrypt(bits, src, rng), pk)
    assert np.array_equal(_slots(out, dst), bits)


def test_over_capacity(setup):
    src, dst, pk = setup
    with pytest.raises(CapacityError):
        pack_lwe_to_rlwe([C.LweCiphertext.trivial(32, 0)] * 65, pk)


def test_empty_is_zero(setup):
    _, _, pk = setup
    assert pack_lwe_to_rlwe([], pk) == C.RlweCiphertext.zero(RING)
