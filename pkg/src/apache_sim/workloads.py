"""Trace generators: operator batches and desk-scale application analogues.

Every generator returns a list of JSON-lines records. Input records carry the
plaintext used by the functional layer; operator records carry the params the
timing model reads (CKKS overrides N/limbs/special/dnum, placement hints).
"""

from __future__ import annotations

import os
from importlib import resources
from typing import Dict, List, Optional

import numpy as np

from apache_sim.errors import InvalidParameterError
from apache_sim.scheduler import read_trace, write_trace

RUN_OPS = ("HAdd", "PMult", "CMult", "HRot", "HomGate", "CBoot", "PubKS", "PrivKS", "Pack")

# desk-scale CKKS point for the application analogues: operands and the
# relinearization key fit the 24 MiB data buffer
DESK_CKKS = {"N": 1 << 14, "limbs": 8, "special": 2, "dnum": 4}


def _input(ct: str, kind: str, value=None, values=None, **extra) -> dict:
    params = {"type": kind}
    if value is not None:
        params["value"] = int(value)
    if values is not None:
        params["values"] = [int(v) for v in values]
    params.update(extra)
    return {"op": "Input", "id": ct, "outputs": [ct], "params": params}


def _op(op: str, nid: str, inputs, outputs, **params) -> dict:
    return {"op": op, "id": nid, "inputs": list(inputs), "outputs": list(outputs), "params": params}


def op_batch(op: str, count: int, seed: int = 0, pack_t: int = 8, ckks: Optional[dict] = None) -> List[dict]:
    """``count`` mutually independent instances of one operator."""
    if op not in RUN_OPS:
        raise InvalidParameterError(f"unknown operator {op!r}; choose from {', '.join(RUN_OPS)}")
    if count < 0:
        raise InvalidParameterError("count must be >= 0")
    rng = np.random.default_rng(seed)
    ck = dict(ckks or {})
    recs: List[dict] = []
    for i in range(count):
        if op == "HomGate":
            a, b = rng.integers(0, 2, 2)
            recs += [_input(f"a{i}", "bit", a), _input(f"b{i}", "bit", b)]
            recs.append(_op(op, f"g{i}", [f"a{i}", f"b{i}"], [f"o{i}"], gate="NAND"))
        elif op == "CBoot":
            recs.append(_input(f"a{i}", "bit", rng.integers(0, 2)))
            recs.append(_op(op, f"cb{i}", [f"a{i}"], [f"o{i}"]))
        elif op in ("PubKS", "PrivKS"):
            recs.append(_input(f"a{i}", "bit_big", rng.integers(0, 2)))
            recs.append(_op(op, f"ks{i}", [f"a{i}"], [f"o{i}"]))
        elif op == "Pack":
            ins = [f"a{i}_{j}" for j in range(pack_t)]
            recs += [_input(c, "bit_big", rng.integers(0, 2)) for c in ins]
            recs.append(_op(op, f"pk{i}", ins, [f"o{i}"], t=pack_t))
        else:
            vals = rng.integers(-4, 5, 8)
            recs.append(_input(f"x{i}", "ckks", values=vals, **ck))
            if op in ("HAdd", "CMult"):
                recs.append(_input(f"y{i}", "ckks", values=rng.integers(-4, 5, 8), **ck))
                recs.append(_op(op, f"n{i}", [f"x{i}", f"y{i}"], [f"o{i}"], **ck))
            elif op == "PMult":
                recs.append(_op(op, f"n{i}", [f"x{i}"], [f"o{i}"], plain=[int(v) for v in rng.integers(-3, 4, 4)], **ck))
            else:
                recs.append(_op(op, f"n{i}", [f"x{i}"], [f"o{i}"], steps=1, **ck))
    return recs


def mixed_ckks(iterations: int = 16, seed: int = 0, ckks: Optional[dict] = None) -> List[dict]:
    """HELR-like loop: one CMult per iteration plus four NTT-free operators.

    Iteration k: m_k = CMult(x_k, w); the previous product is scaled by two
    plaintexts (PMult), the two are summed and folded into an accumulator
    (HAdd). The NTT-free work of iteration k only needs m_{k-1}, so it can
    run on the NTT-free routine while m_k is computed.
    """
    ck = dict(DESK_CKKS if ckks is None else ckks)
    rng = np.random.default_rng(seed)
    recs = [_input(f"x{j}", "ckks", values=rng.integers(-3, 4, 8), **ck) for j in range(4)]
    recs.append(_input("w", "ckks", values=rng.integers(-3, 4, 8), **ck))
    acc = None

    def nonntt(k, m):
        nonlocal acc
        plains = [[1, int(rng.integers(-2, 3))], [int(rng.integers(-2, 3)), 1]]
        recs.append(_op("PMult", f"pa{k}", [m], [f"pa{k}"], plain=plains[0], **ck))
        recs.append(_op("PMult", f"pb{k}", [m], [f"pb{k}"], plain=plains[1], **ck))
        recs.append(_op("HAdd", f"s{k}", [f"pa{k}", f"pb{k}"], [f"s{k}"], **ck))
        if acc is None:
            acc = f"s{k}"
        else:
            recs.append(_op("HAdd", f"acc{k}", [acc, f"s{k}"], [f"acc{k}"], **ck))
            acc = f"acc{k}"

    for k in range(iterations):
        recs.append(_op("CMult", f"cm{k}", [f"x{k % 4}", "w"], [f"m{k}"], **ck))
        if k:
            nonntt(k, f"m{k - 1}")
    if iterations:
        nonntt(iterations, f"m{iterations - 1}")
    return recs


def vsp_readout(address_bits: int = 9, seed: int = 0, forward: bool = True) -> List[dict]:
    """VSP-style RAM read: CBoot every address bit, CMUX tree over the
    2^bits RLWE entries, SampleExtract, then forward the LWE to DIMM 1.

    The readout is pinned to DIMM 0; the consumer (a key switch back to the
    gate key) is pinned to DIMM 1.
    """
    if address_bits < 1:
        raise InvalidParameterError("address_bits must be >= 1")
    rng = np.random.default_rng(seed)
    entries = 1 << address_bits
    addr = int(rng.integers(0, entries))
    data = rng.integers(0, 2, entries)
    recs = [_input(f"addr{b}", "bit", (addr >> b) & 1) for b in range(address_bits)]
    recs += [_input(f"e{i}", "rlwe_bit", data[i]) for i in range(entries)]
    for b in range(address_bits):
        recs.append(_op("CBoot", f"cb{b}", [f"addr{b}"], [f"G{b}"], dimm=0))
    level = [f"e{i}" for i in range(entries)]
    for b in range(address_bits):
        nxt = []
        for k in range(len(level) // 2):
            out = f"t{b}_{k}"
            recs.append(_op("CMUX", f"mx{b}_{k}", [f"G{b}", level[2 * k + 1], level[2 * k]], [out], dimm=0))
            nxt.append(out)
        level = nxt
    recs.append(_op("SampleExtract", "extract", [level[0]], ["word"], index=0, dimm=0))
    if forward:
        recs.append(_op("PubKS", "consume", ["word"], ["word_small"], dimm=1))
    return recs


def he3db_mixed(rows: int = 8, seed: int = 0, ckks: Optional[dict] = None) -> List[dict]:
    """HE3DB-like query: TFHE predicate gates per row plus a CKKS aggregation."""
    ck = dict(DESK_CKKS if ckks is None else ckks)
    rng = np.random.default_rng(seed)
    recs = []
    for r in range(rows):
        recs += [_input(f"k{r}", "bit", rng.integers(0, 2)), _input(f"c{r}", "bit", rng.integers(0, 2))]
        recs.append(_op("HomGate", f"eq{r}", [f"k{r}", f"c{r}"], [f"m{r}"], gate="XOR"))
        recs.append(_op("HomGate", f"nm{r}", [f"m{r}", f"c{r}"], [f"f{r}"], gate="NAND"))
        recs.append(_input(f"v{r}", "ckks", values=rng.integers(0, 5, 4), **ck))
        recs.append(_op("PMult", f"w{r}", [f"v{r}"], [f"wv{r}"], plain=[1], **ck))
    acc = "wv0"
    for r in range(1, rows):
        recs.append(_op("HAdd", f"sum{r}", [acc, f"wv{r}"], [f"s{r}"], **ck))
        acc = f"s{r}"
    recs.append(_input("price", "ckks", values=[2], **ck))
    recs.append(_op("CMult", "total", [acc, "price"], ["revenue"], **ck))
    recs.append(_op("HRot", "fold", [acc], ["folded"], steps=1, **ck))
    return recs


def mnist_like(layers: int = 2, width: int = 4, seed: int = 0, ckks: Optional[dict] = None) -> List[dict]:
    """LoLa-style dense layers: PMult by weights, HAdd, square (first layer), rotate.

    With ``layers=0`` the trace holds only the encrypted image (setup only).
    """
    ck = dict(DESK_CKKS if ckks is None else ckks)
    rng = np.random.default_rng(seed)
    recs = [_input(f"img{j}", "ckks", values=rng.integers(0, 3, 8), **ck) for j in range(width)]
    cur = [f"img{j}" for j in range(width)]
    for layer in range(layers):
        nxt = []
        for j in range(width):
            prods = []
            for i, c in enumerate(cur):
                out = f"l{layer}_p{j}_{i}"
                recs.append(_op("PMult", f"L{layer}pm{j}_{i}", [c], [out], plain=[int(rng.integers(-1, 2))], **ck))
                prods.append(out)
            acc = prods[0]
            for i, p in enumerate(prods[1:], 1):
                out = f"l{layer}_a{j}_{i}"
                recs.append(_op("HAdd", f"L{layer}ha{j}_{i}", [acc, p], [out], **ck))
                acc = out
            if layer == 0:  # square activation once (one multiplicative level)
                sq = f"l{layer}_sq{j}"
                recs.append(_op("CMult", f"L{layer}sq{j}", [acc, acc], [sq], **ck))
                acc = sq
            rot = f"l{layer}_r{j}"
            recs.append(_op("HRot", f"L{layer}rot{j}", [acc], [rot], steps=1, **ck))
            nxt.append(rot)
        cur = nxt
    return recs


APPS = {
    "mixed_ckks": mixed_ckks,
    "vsp": vsp_readout,
    "he3db": he3db_mixed,
    "mnist": mnist_like,
}

# bundled desk-scale traces: name -> (generator, kwargs, scaling note)
BUNDLED: Dict[str, tuple] = {
    "homgate_batch": (op_batch, {"op": "HomGate", "count": 16},
                      "16 NAND gates; throughput batches use 512"),
    "mixed_ckks": (mixed_ckks, {"iterations": 16},
                   "16 HELR-like iterations at N=2^14, 8 limbs (full scale N=2^16, 44 limbs)"),
    "vsp_toy": (vsp_readout, {"address_bits": 2},
                "4-entry RAM (full scale 512 entries, 9 address bits)"),
    "he3db": (he3db_mixed, {"rows": 6}, "6 rows, one aggregation"),
    "mnist": (mnist_like, {"layers": 2, "width": 3}, "2 layers of width 3"),
}


def bundled_trace(name: str) -> List[dict]:
    """Records of a bundled trace, read from the package data."""
    if name not in BUNDLED:
        raise InvalidParameterError(f"unknown bundled trace {name!r}")
    text = resources.files("apache_sim").joinpath(f"data/traces/{name}.jsonl").read_text()
    return read_trace(text.splitlines())


def generate_bundled(name: str) -> List[dict]:
    fn, kw, _ = BUNDLED[name]
    return fn(**kw)


def write_bundled(directory) -> None:
    """Regenerate the bundled trace files with a header comment each."""
    for name, (fn, kw, note) in BUNDLED.items():
        with open(os.path.join(directory, f"{name}.jsonl"), "w") as fh:
            fh.write(f"# {name}: {fn.__name__}({', '.join(f'{k}={v!r}' for k, v in kw.items())})\n")
            fh.write(f"# scaling: {note}\n")
            write_trace(generate_bundled(name), fh)


def app_trace(name: str, **kw) -> List[dict]:
    if name not in APPS:
        raise InvalidParameterError(f"unknown application {name!r}; choose from {', '.join(APPS)}")
    return APPS[name](**kw)
