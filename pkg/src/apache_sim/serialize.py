"""Little-endian binary fixtures for ciphertexts.

Layout: b"APCH", u16 version, u8 kind, u8 word bytes, then a kind-specific
header and the coefficient words.

    LWE   u32 n, u64 q, (n+1) words: a[0..n), b
    RLWE  u32 N, u16 limbs, u16 level, limbs*u64 moduli, words a then b
    RGSW  u32 N, u64 q, u16 base_log, u16 levels, then 2*levels*2*N words
"""

from __future__ import annotations

import struct
from typing import Union

import numpy as np

from apache_sim.errors import FormatError
from apache_sim.kernels.ciphertexts import LweCiphertext, RgswCiphertext, RlweCiphertext
from apache_sim.kernels.ring import RingParams

MAGIC = b"APCH"
VERSION = 1
KIND_LWE, KIND_RLWE, KIND_RGSW = 1, 2, 3

Ciphertext = Union[LweCiphertext, RlweCiphertext, RgswCiphertext]


def _word_bytes(q: int) -> int:
    return 4 if q <= (1 << 32) else 8


def _words(arr, wb: int) -> bytes:
    dt = "<u4" if wb == 4 else "<u8"
    return np.asarray(arr).astype(np.uint64).astype(dt).tobytes()


def dumps(ct: Ciphertext) -> bytes:
    if isinstance(ct, LweCiphertext):
        wb = _word_bytes(ct.q)
        head = struct.pack("<IQ", ct.n, ct.q)
        body = _words(np.append(ct.a, ct.b), wb)
        kind = KIND_LWE
    elif isinstance(ct, RlweCiphertext):
        p = ct.params
        wb = _word_bytes(max(p.moduli))
        head = struct.pack("<IHH", p.N, p.limbs, ct.level) + struct.pack(f"<{p.limbs}Q", *p.moduli)
        body = _words(ct.a, wb) + _words(ct.b, wb)
        kind = KIND_RLWE
    elif isinstance(ct, RgswCiphertext):
        p = ct.params
        wb = _word_bytes(p.q)
        head = struct.pack("<IQHH", p.N, p.q, ct.base_log, ct.levels)
        body = _words(ct.as_array(), wb)
        kind = KIND_RGSW
    else:
        raise FormatError(f"cannot serialize {type(ct).__name__}")
    return MAGIC + struct.pack("<HBB", VERSION, kind, wb) + head + body


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError("truncated APCH record")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def words(self, count: int, wb: int) -> np.ndarray:
        size = count * wb
        if self.pos + size > len(self.data):
            raise FormatError("truncated APCH coefficient block")
        arr = np.frombuffer(self.data, dtype="<u4" if wb == 4 else "<u8", count=count, offset=self.pos)
        self.pos += size
        return arr


def loads(data: bytes) -> Ciphertext:
    if data[:4] != MAGIC:
        raise FormatError("bad magic, expected APCH")
    r = _Reader(data)
    r.pos = 4
    version, kind, wb = r.take("<HBB")
    if version != VERSION:
        raise FormatError(f"unsupported APCH version {version}")
    if wb not in (4, 8):
        raise FormatError(f"bad word size {wb}")
    if kind == KIND_LWE:
        n, q = r.take("<IQ")
        w = r.words(n + 1, wb).astype(np.int64)
        out = LweCiphertext(w[:n].copy(), int(w[n]), q)
    elif kind == KIND_RLWE:
        N, limbs, level = r.take("<IHH")
        moduli = r.take(f"<{limbs}Q")
        params = RingParams(N, q=moduli[0]) if limbs == 1 else RingParams(N, moduli=tuple(moduli))
        dt = np.int64 if limbs == 1 else np.uint64
        shape = (N,) if limbs == 1 else (limbs, N)
        a = r.words(limbs * N, wb).astype(dt).reshape(shape)
        b = r.words(limbs * N, wb).astype(dt).reshape(shape)
        out = RlweCiphertext(a, b, params, level)
    elif kind == KIND_RGSW:
        N, q, base_log, levels = r.take("<IQHH")
        params = RingParams(N, q)
        arr = r.words(2 * levels * 2 * N, wb).astype(np.int64).reshape(2 * levels, 2, N)
        rows = [RlweCiphertext(arr[i, 0].copy(), arr[i, 1].copy(), params) for i in range(2 * levels)]
        out = RgswCiphertext(rows, base_log, levels, params)
    else:
        raise FormatError(f"unknown ciphertext kind {kind}")
    if r.pos != len(data):
        raise FormatError("trailing bytes after APCH record")
    return out


def save(path, ct: Ciphertext) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(ct))


def load(path) -> Ciphertext:
    with open(path, "rb") as fh:
        return loads(fh.read())
