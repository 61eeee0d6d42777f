"""Unified automorphism unit: CKKS slot maps and the fused TFHE rotate-and-subtract."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from apache_sim.errors import InvalidParameterError, RangeError
from apache_sim.kernels.ciphertexts import RlweCiphertext
from apache_sim.kernels.ring import RingParams

CKKS_MAP = "ckks_map"
TFHE_ROTATE_SUB = "tfhe_rotate_sub"


@lru_cache(maxsize=64)
def _ckks_perm(N: int, k: int):
    i = np.arange(N)
    j = i * k % (2 * N)
    wrap = j >= N
    return np.where(wrap, j - N, j), wrap


@lru_cache(maxsize=16)
def rotation_tables(N: int):
    """Gather indices and signs for X^{-a} * p, every a in [0, 2N).

    ``(X^{-a} p)[k] = sign[a, k] * p[idx[a, k]]``.
    """
    a = np.arange(2 * N)[:, None]
    k = np.arange(N)[None, :]
    src = k + a  # coefficient of X^{k+a} lands on X^k
    idx = src % N
    # each wrap past X^N flips the sign
    sign = np.where((src // N) % 2 == 1, -1, 1).astype(np.int64)
    return idx, sign


def _signed_mod(vals, neg_mask, moduli):
    """Negate entries under ``neg_mask`` and reduce (per limb for RNS)."""
    if len(moduli) == 1:
        q = moduli[0]
        v = vals.astype(np.int64)
        return np.where(neg_mask, (q - v) % q, v)
    p = np.array(moduli, dtype=np.uint64)[:, None]
    return np.where(neg_mask, (p - vals) % p, vals)


def ckks_map(poly: np.ndarray, k: int, params: RingParams) -> np.ndarray:
    """Apply X -> X^k: coefficient i moves to i*k mod 2N, negated on wraparound."""
    N = params.N
    if k % 2 == 0:
        raise InvalidParameterError(f"automorphism index {k} must be odd")
    dest, wrap = _ckks_perm(N, k % (2 * N))
    out = np.empty_like(poly)
    out[..., dest] = _signed_mod(poly, np.broadcast_to(wrap, poly.shape), params.moduli)
    return out


def rotate_sub(acc: np.ndarray, a, q: int) -> np.ndarray:
    """Fused ``X^{-a} * acc - acc`` over Z_q, batched.

    ``acc`` has shape ``(B, ..., N)`` and ``a`` shape ``(B,)``; a scalar ``a``
    applies to the whole array. The original polynomial is read once and
    both the rotated copy and the subtraction come from the same pass.
    """
    N = acc.shape[-1]
    a = np.asarray(a)
    if ((a < 0) | (a >= 2 * N)).any():
        raise RangeError(f"rotation index must lie in [0, {2 * N})")
    idx, sign = rotation_tables(N)
    if a.ndim == 0:
        rot = acc[..., idx[a]] * sign[a]
    else:
        extra = acc.ndim - 2
        ii = idx[a].reshape((len(a),) + (1,) * extra + (N,))
        ss = sign[a].reshape((len(a),) + (1,) * extra + (N,))
        rot = np.take_along_axis(acc, np.broadcast_to(ii, acc.shape), axis=-1) * ss
    return (rot - acc) % q


def automorphism(x, mode: str, index: int, params: RingParams | None = None):
    """Dispatch to the CKKS map (``index`` = k) or TFHE rotate-sub (``index`` = a).

    ``x`` is a polynomial array (``params`` required) or an RlweCiphertext.
    """
    if isinstance(x, RlweCiphertext):
        p = x.params
        return RlweCiphertext(automorphism(x.a, mode, index, p), automorphism(x.b, mode, index, p),
                              p, x.level)
    if params is None:
        raise InvalidParameterError("params required for raw polynomials")
    if mode == CKKS_MAP:
        return ckks_map(np.asarray(x), index, params)
    if mode == TFHE_ROTATE_SUB:
        if params.limbs != 1:
            raise InvalidParameterError("TFHE rotation needs a single-modulus ring")
        if not 0 <= index < 2 * params.N:
            raise RangeError(f"rotation index must lie in [0, {2 * params.N})")
        return rotate_sub(np.asarray(x, dtype=np.int64), index, params.q)
    raise InvalidParameterError(f"unknown automorphism mode {mode!r}")
