"""Per-operator work model at timing scale.

Maps an operator kind plus the timing parameter sets to the route steps of
the NMC module with per-FU element counts, the in-memory key-switch calls,
the bytes moved through the near-memory level and the evaluation key used.
Nothing here touches ciphertext data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from apache_sim.arch import AUTOMORPH, DECOMP, IM, MADD, MMULT, NTT, RouteStep, route_operation
from apache_sim.config import RingConfig, SimConfig
from apache_sim.errors import RoutingError
from apache_sim.kernels.modmul import MultiplierMode
from apache_sim.memory import PRIVATE, PUBLIC

LWE, RLWE, RGSW = "lwe", "rlwe", "rgsw"

# ciphertext family of each operator's outputs
OUTPUT_TYPE = {
    "HomGate": LWE, "CBoot": RGSW, "CMUX": RLWE, "SampleExtract": LWE, "BlindRotate": RLWE,
    "HAdd": RLWE, "PMult": RLWE, "CMult": RLWE, "HRot": RLWE,
    "PubKS": LWE, "PrivKS": RLWE, "Pack": RLWE,
}

# parameter family (which RingConfig block sizes the operator)
FAMILY = {
    "HomGate": "tfhe", "BlindRotate": "tfhe", "PubKS": "tfhe", "Pack": "tfhe",
    "CBoot": "cb", "CMUX": "cb", "SampleExtract": "cb", "PrivKS": "cb",
    "HAdd": "ckks", "PMult": "ckks", "CMult": "ckks", "HRot": "ckks",
}


@dataclass
class StepWork:
    step: RouteStep
    work: Dict[str, int] = field(default_factory=dict)  # FU kind -> elements
    repeat: int = 1
    ks: Optional[Tuple[str, tuple, int, int]] = None  # (kind, dims, entry_words, word_bits)


@dataclass
class OpCost:
    kind: str
    steps: List[StepWork]
    word_bits: int
    read_bytes: int
    write_bytes: int
    key_id: Optional[str] = None
    key_bytes: int = 0

    def mode(self, override: str = "auto") -> MultiplierMode:
        if override != "auto":
            return MultiplierMode(override)
        return MultiplierMode.TWO32 if self.word_bits <= 32 else MultiplierMode.ONE64


CKKS_OVERRIDES = {"N": "ckks_N", "limbs": "ckks_limbs", "special": "ckks_special", "dnum": "ckks_dnum"}


def ckks_ring(r: RingConfig, params: Optional[dict]) -> RingConfig:
    """Ring config with per-record CKKS overrides (N, limbs, special, dnum)."""
    kw = {CKKS_OVERRIDES[k]: int(v) for k, v in (params or {}).items() if k in CKKS_OVERRIDES}
    return replace(r, **kw) if kw else r


def ckks_tag(r: RingConfig) -> str:
    return f"N{r.ckks_N}L{r.ckks_limbs}K{r.ckks_special}d{r.ckks_dnum}"


# timing family and ciphertext type of each functional input type
INPUT_TYPES = {"bit": (LWE, "tfhe"), "bit_big": (LWE, "cb"), "rlwe_bit": (RLWE, "cb"), "ckks": (RLWE, "ckks")}


def input_bytes(rec: dict, r: RingConfig) -> int:
    """Timing-scale size of every ciphertext declared by an Input record."""
    params = rec.get("params", {})
    ctype, family = INPUT_TYPES.get(params.get("type", "bit"), (LWE, "tfhe"))
    ctype = params.get("ctype", ctype)
    family = params.get("family", family)
    return ct_bytes(ctype, family, ckks_ring(r, params))


def ct_bytes(ctype: str, family: str, r: RingConfig) -> int:
    """Size of one ciphertext of ``ctype`` under a timing parameter family."""
    if family == "tfhe":
        wb = r.tfhe_word_bits // 8
        sizes = {LWE: (r.tfhe_n + 1) * wb, RLWE: 2 * r.tfhe_N * wb, RGSW: 4 * r.tfhe_bk_levels * r.tfhe_N * wb}
    elif family == "cb":
        wb = r.cb_word_bits // 8
        sizes = {LWE: (r.cb_N + 1) * wb, RLWE: 2 * r.cb_N * wb, RGSW: 4 * r.cb_levels * r.cb_N * wb}
    elif family == "vsp":
        wb = r.vsp_word_bits // 8
        sizes = {LWE: (r.vsp_lwe_n + 1) * wb, RLWE: 2 * r.vsp_lwe_n * wb, RGSW: 4 * r.cb_levels * r.vsp_lwe_n * wb}
    elif family == "ckks":
        wb = r.ckks_word_bits // 8
        sizes = {LWE: (r.ckks_N + 1) * wb, RLWE: 2 * r.ckks_limbs * r.ckks_N * wb,
                 RGSW: 4 * r.ckks_limbs * r.ckks_N * wb}
    else:
        raise RoutingError(f"unknown parameter family {family!r}")
    return sizes[ctype]


def output_bytes(kind: str, r: RingConfig, count: int = 1) -> int:
    return count * ct_bytes(OUTPUT_TYPE[kind], FAMILY[kind], r)


def _br_work(n: int, N: int, levels: int) -> Dict[str, int]:
    """One blind rotation: n CMUX iterations with the fused rotate-subtract."""
    return {
        AUTOMORPH: n * 2 * N,
        DECOMP: n * 2 * N,
        NTT: n * (2 * levels + 2) * N,
        MMULT: n * 4 * levels * N,
        MADD: n * 4 * levels * N,
    }


def _ks_ntt_limbs(r: RingConfig) -> int:
    L, K, d = r.ckks_limbs, r.ckks_special, r.ckks_dnum
    # INTT of the input, mod-up NTTs per digit, mod-down INTT, back to eval form
    return L + d * (L + K) + 2 * (L + K) + 2 * L


def operator_cost(kind: str, cfg: SimConfig, params: Optional[dict] = None) -> OpCost:
    r = cfg.ring
    params = params or {}
    steps = {s.name: s for s in route_operation(kind, cfg.fu.topology)}
    sw: List[StepWork] = []
    if kind == "HomGate":
        n, N, lv = r.tfhe_n, r.tfhe_N, r.tfhe_bk_levels
        sw.append(StepWork(steps["linear"], {MADD: n + 1}))
        sw.append(StepWork(steps["blind_rotate"], _br_work(n, N, lv)))
        sw.append(StepWork(steps["pubks"], ks=(PUBLIC, (N, r.tfhe_ks_t, 1), n + 1, r.tfhe_word_bits)))
        wb = r.tfhe_word_bits // 8
        return OpCost(kind, sw, r.tfhe_word_bits, 2 * (n + 1) * wb, (n + 1) * wb,
                      "bsk_tfhe", n * 4 * lv * N * wb)
    if kind == "BlindRotate":
        n, N, lv = r.tfhe_n, r.tfhe_N, r.tfhe_bk_levels
        sw.append(StepWork(steps["blind_rotate"], _br_work(n, N, lv)))
        wb = r.tfhe_word_bits // 8
        return OpCost(kind, sw, r.tfhe_word_bits, (n + 1) * wb, 2 * N * wb, "bsk_tfhe", n * 4 * lv * N * wb)
    if kind == "CBoot":
        n, N, lv, cl = r.cb_n, r.cb_N, r.cb_bk_levels, r.cb_levels
        sw.append(StepWork(steps["blind_rotate"], _br_work(n, N, lv), repeat=cl))
        sw.append(StepWork(steps["privks"], repeat=2 * cl, ks=(PRIVATE, (N, r.cb_privks_t, 1), 2 * N, r.cb_word_bits)))
        wb = r.cb_word_bits // 8
        return OpCost(kind, sw, r.cb_word_bits, (n + 1) * wb, 4 * cl * N * wb, "bsk_cb", n * 4 * lv * N * wb)
    if kind == "CMUX":
        N, lv = r.cb_N, r.cb_levels
        sw.append(StepWork(steps["diff"], {MADD: 2 * N}))
        sw.append(StepWork(steps["extprod"], {DECOMP: 2 * N, NTT: (2 * lv + 2) * N, MMULT: 4 * lv * N,
                                              MADD: 4 * lv * N}))
        wb = r.cb_word_bits // 8
        return OpCost(kind, sw, r.cb_word_bits, (4 * lv * N + 4 * N) * wb, 2 * N * wb)
    if kind == "SampleExtract":
        N = r.cb_N
        sw.append(StepWork(steps["extract"], {AUTOMORPH: N + 1}))
        wb = r.cb_word_bits // 8
        return OpCost(kind, sw, r.cb_word_bits, 2 * N * wb, (N + 1) * wb)
    if kind == "PubKS":
        sw.append(StepWork(steps["pubks"], ks=(PUBLIC, (r.pubks_n, r.pubks_t, 1), r.tfhe_n + 1, r.tfhe_word_bits)))
        wb = r.tfhe_word_bits // 8
        return OpCost(kind, sw, r.tfhe_word_bits, (r.pubks_n + 1) * wb, (r.tfhe_n + 1) * wb,
                      "pubks", int(r.pubks_key_bytes))
    if kind == "PrivKS":
        sw.append(StepWork(steps["privks"], ks=(PRIVATE, (r.privks_n, r.privks_t, r.privks_p), 2 * r.cb_N,
                                                r.cb_word_bits)))
        wb = r.cb_word_bits // 8
        return OpCost(kind, sw, r.cb_word_bits, r.privks_p * (r.privks_n + 1) * wb, 2 * r.cb_N * wb,
                      "privks", int(r.privks_key_bytes))
    if kind == "Pack":
        n, N, lv = r.tfhe_n, r.tfhe_N, r.tfhe_bk_levels
        t = int(params.get("t", 1))
        sw.append(StepWork(steps["pack"], {DECOMP: n * t, NTT: (n * lv + 2) * N, MMULT: 2 * n * lv * N,
                                           MADD: 2 * n * lv * N}))
        wb = r.tfhe_word_bits // 8
        return OpCost(kind, sw, r.tfhe_word_bits, t * (n + 1) * wb, 2 * N * wb, "packing", n * lv * 2 * N * wb)
    # leveled CKKS
    r = ckks_ring(r, params)
    N, L, K, d = r.ckks_N, r.ckks_limbs, r.ckks_special, r.ckks_dnum
    wb = r.ckks_word_bits // 8
    ct = 2 * L * N * wb
    ks_key = 2 * d * (L + K) * N * wb
    ks_work = {NTT: _ks_ntt_limbs(r) * N, MMULT: (2 * d + 2) * (L + K) * N, MADD: (2 * d + 2) * (L + K) * N}
    if kind == "HAdd":
        sw.append(StepWork(steps["hadd"], {MADD: 2 * L * N}))
        return OpCost(kind, sw, r.ckks_word_bits, 2 * ct, ct)
    if kind == "PMult":
        sw.append(StepWork(steps["pmult"], {MMULT: 2 * L * N}))
        return OpCost(kind, sw, r.ckks_word_bits, ct + L * N * wb, ct)
    if kind == "CMult":
        sw.append(StepWork(steps["tensor"], {NTT: 4 * L * N, MMULT: 4 * L * N, MADD: L * N}))
        sw.append(StepWork(steps["keyswitch"], ks_work))
        return OpCost(kind, sw, r.ckks_word_bits, 2 * ct, ct, f"relin.{ckks_tag(r)}", ks_key)
    if kind == "HRot":
        w = dict(ks_work)
        w[AUTOMORPH] = 2 * L * N
        sw.append(StepWork(steps["rotate_keyswitch"], w))
        return OpCost(kind, sw, r.ckks_word_bits, ct, ct, f"rot{int(params.get('steps', 1))}.{ckks_tag(r)}", ks_key)
    raise RoutingError(f"unknown operator {kind!r}")
