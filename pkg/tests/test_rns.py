import numpy as np
import pytest

from apache_sim.errors import ShapeError
from apache_sim.kernels import ciphertexts as C
from apache_sim.kernels.ring import RingParams
from apache_sim.kernels.rns import cmult, galois_element, hadd, hrot, pmult, relin_keygen, rotation_keygen

RING = RingParams.rns(N=256, limbs=3)


@pytest.fixture(scope="module")
def ctx():
    rng = np.random.default_rng(31)
    key = C.rlwe_keygen(RING, rng, ternary=True)
    return rng, key


def negacyclic(a, b):
    N = len(a)
    out = [0] * N
    for i in range(N):
        for j in range(N):
            k = i + j
            if k < N:
                out[k] += int(a[i]) * int(b[j])
            else:
                out[k - N] -= int(a[i]) * int(b[j])
    return np.array(out, dtype=object)


def _dec(ct, key):
    return C.rlwe_decrypt(ct, key).astype(object)


def _enc(m, key, rng):
    return C.rlwe_encrypt(np.asarray(m, dtype=object), key, rng, 3.2)


def _close(x, y, tol):
    return max(abs(int(a) - int(b)) for a, b in zip(x, y)) <= tol


def test_hadd(ctx):
    rng, key = ctx
    m1 = rng.integers(-10**6, 10**6, 256)
    m2 = rng.integers(-10**6, 10**6, 256)
    assert _close(_dec(hadd(_enc(m1, key, rng), _enc(m2, key, rng)), key), m1 + m2, 100)


def test_pmult(ctx):
    rng, key = ctx
    m = rng.integers(-1000, 1000, 256)
    p = rng.integers(-3, 4, 256)
    assert _close(_dec(pmult(_enc(m, key, rng), p), key), negacyclic(m, p), 20000)


def test_cmult(ctx):
    rng, key = ctx
    scale = 1 << 20
    m1 = np.zeros(256, dtype=np.int64)
    m2 = np.zeros(256, dtype=np.int64)
    m1[:4] = [3, -2, 5, 1]
    m2[:4] = [7, 1, -4, 2]
    out = _dec(cmult(_enc(m1 * scale, key, rng), _enc(m2 * scale, key, rng), relin_keygen(key, rng)), key)
    want = negacyclic(m1, m2) * scale * scale
    assert _close(out, want, scale * scale // 1000)


def test_hrot(ctx):
    rng, key = ctx
    m = rng.integers(-100, 100, 256) * (1 << 20)
    k = galois_element(1, 256)
    out = _dec(hrot(_enc(m, key, rng), 1, rotation_keygen(1, key, rng)), key)
    want = np.zeros(256, dtype=object)
    for i in range(256):
        e = i * k % 512
        if e < 256:
            want[e] += int(m[i])
        else:
            want[e - 256] -= int(m[i])
    assert _close(out, want, 1 << 18)  # key-switch noise is ~2^15


def test_mismatched_params(ctx):
    rng, key = ctx
    other = RingParams.rns(N=256, limbs=2)
    with pytest.raises(ShapeError):
        hadd(_enc(np.zeros(256), key, rng), C.RlweCiphertext.zero(other))
