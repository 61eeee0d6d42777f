"""Acceptance criteria at their stated tolerances; one PASS/FAIL line each."""

import time
from fractions import Fraction

import numpy as np
import pytest

from apache_sim import bench
from apache_sim.config import default_config_text, load_config
from apache_sim.engine import simulate_trace, transfer_costs
from apache_sim.kernels import ciphertexts as C
from apache_sim.kernels.keyswitch import (priv_keyswitch, priv_ks_keygen, priv_transmitted_bits, pub_keyswitch,
                                          pub_ks_keygen, pub_transmitted_bits)
from apache_sim.kernels.ntt import ntt_mul
from apache_sim.kernels.tfhe import decrypt_bit, encrypt_bit, hom_nand_batch
from apache_sim.memory import PRIVATE, PUBLIC
from apache_sim.scheduler import NO_PACK, PACK, TransferCost, packing_decision
from apache_sim.workloads import BUNDLED, bundled_trace

from ks_oracle import priv_keyswitch_loops, pub_keyswitch_loops


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail

    return emit


def quadratic_negacyclic(a, b, q):
    # O(N^2) row-by-row accumulation, exact in int64 for q < 2^31
    n = len(a)
    acc = np.zeros(n, dtype=np.int64)
    for i in range(n):
        row = a[i] * b % q
        acc[i:] += row[:n - i]
        acc[:i] -= row[n - i:]
        acc %= q
    return acc


def test_c1_ntt_matches_quadratic(verdict):
    rng = np.random.default_rng(101)
    t0, bad = time.perf_counter(), 0
    for n, q in ((8, 17), (256, 7681), (1024, 2147473409)):
        for _ in range(100):
            a, b = rng.integers(0, q, n), rng.integers(0, q, n)
            bad += not np.array_equal(np.asarray(ntt_mul(a, b, q), dtype=np.int64), quadratic_negacyclic(a, b, q))
    dt = time.perf_counter() - t0
    verdict(1, bad == 0 and dt < 30, f"NTT vs O(N^2) on 300 pairs, mismatches={bad}, {dt:.1f}s (<30s)")


def test_c2_toy_nand(verdict, tfhe_keys):
    r = np.random.default_rng(202)
    t0 = time.perf_counter()
    pairs, want = [], []
    for _ in range(25):
        for a in (0, 1):
            for b in (0, 1):
                pairs.append((encrypt_bit(a, tfhe_keys, r), encrypt_bit(b, tfhe_keys, r)))
                want.append(1 - (a & b))
    got = [decrypt_bit(c, tfhe_keys.lwe) for c in hom_nand_batch(pairs, tfhe_keys)]
    dt = time.perf_counter() - t0
    acc = sum(g == w for g, w in zip(got, want)) / len(want)
    verdict(2, acc >= 0.99 and dt < 120, f"toy NAND accuracy {acc:.2%} over 100 trials, {dt:.1f}s (<120s)")


def test_c3_keyswitch_bit_identical(verdict):
    rng = np.random.default_rng(303)
    q, n_in, n_out, bl, t = 1 << 32, 64, 32, 4, 4
    src, dst = C.lwe_keygen(n_in, rng), C.lwe_keygen(n_out, rng)
    pub = pub_ks_keygen(src, dst, bl, t, rng, 2.0**10)
    mismatches, bits_ok = 0, True
    for i in range(50):
        if i % 2 == 0:
            ct = [C.lwe_encrypt(int(rng.integers(0, q)), src, rng)]
            res = pub_keyswitch("identity", pub, ct)
            a, b = pub_keyswitch_loops([1], ct, pub)
            bits_ok &= res.transmitted_bits == pub_transmitted_bits(n_in, t) == n_in * t
        else:
            p = 1 + i % 3
            f = [int(v) for v in rng.integers(-8, 9, p)]
            priv = priv_ks_keygen(src, dst, f, bl, t, rng, 2.0**10)
            ct = [C.lwe_encrypt(int(rng.integers(0, q)), src, rng) for _ in range(p)]
            res = priv_keyswitch(priv, ct)
            a, b = priv_keyswitch_loops(ct, priv)
            bits_ok &= res.transmitted_bits == priv_transmitted_bits(p, n_in, t) == p * (n_in + 1) * t
        mismatches += not ([int(v) for v in res.ciphertext.a] == a and res.ciphertext.b == b)
    verdict(3, mismatches == 0 and bits_ok,
            f"PubKS/PrivKS vs triple loops on 50 instances, mismatches={mismatches}, bit counts exact={bits_ok}")


def test_c4_reduction_factors(verdict):
    cal = bench.calibrate_keyswitch()
    pub, priv = cal[PUBLIC]["ratio"], cal[PRIVATE]["ratio"]
    ok = abs(pub / 3.05e4 - 1) <= 0.20 and abs(priv / 3.15e5 - 1) <= 0.20
    verdict(4, ok, f"reduction pub={pub:.4g} (3.05e4 +-20%) dims={cal[PUBLIC]['dims']}, "
                   f"priv={priv:.4g} (3.15e5 +-20%) dims={cal[PRIVATE]['dims']}")


def test_c5_mixed_utilization(verdict, cfg):
    t0 = time.perf_counter()
    rep = simulate_trace(bundled_trace("mixed_ckks"), cfg, functional=False)
    dt = time.perf_counter() - t0
    utl, dual = rep.utl_ntt, rep.utl_ntt_prime
    order = {}
    for name in BUNDLED:
        r = rep if name == "mixed_ckks" else simulate_trace(bundled_trace(name), cfg, functional=False)
        order[name] = r.utl_ntt_prime >= r.utl_ntt
    ok = dual >= 0.90 and 0.50 <= utl <= 0.85 and all(order.values()) and dt < 60
    verdict(5, ok, f"mixed CKKS Utl'={dual:.3f} (>=0.90), Utl={utl:.3f} in [0.50, 0.85], "
                   f"Utl'>=Utl on all traces={all(order.values())}, {dt:.1f}s (<60s)")


@pytest.fixture(scope="module")
def scaling_runs():
    cfg = load_config()
    t0 = time.perf_counter()
    runs = {op: bench.scaling(op, cfg, (2, 4), bench.THROUGHPUT_BATCH) for op in ("HomGate", "CBoot")}
    return runs, time.perf_counter() - t0


def test_c6_dimm_scaling(verdict, scaling_runs):
    runs, dt = scaling_runs
    ratios = {op: r["ratio"] for op, r in runs.items()}
    ok = all(r is not None and abs(r / 2.0 - 1) <= 0.15 for r in ratios.values()) and dt < 120
    verdict(6, ok, "x4/x2 ratio " + ", ".join(f"{k}={v:.3f}" for k, v in ratios.items())
            + f" (2.0 +-15%), {dt:.1f}s (<120s)")


def test_c7_throughput(verdict, scaling_runs):
    runs, _ = scaling_runs
    hg, cb = runs["HomGate"]["op_per_s"][2], runs["CBoot"]["op_per_s"][2]
    documented = "adder_interval" in default_config_text() and "#" in default_config_text()
    ok = 500e3 / 3 <= hg <= 500e3 * 3 and 49.6e3 / 3 <= cb <= 49.6e3 * 3 and documented
    verdict(7, ok, f"x2 HomGate {hg / 1e3:.1f}K op/s (500K within 3x), CBoot {cb / 1e3:.1f}K op/s "
                   f"(49.6K within 3x), calibration documented={documented}")


def test_c8_packing_rule(verdict, cfg):
    rng = np.random.default_rng(808)
    bad = 0
    for i in range(10_000):
        if i % 10 == 0:
            # equality boundary: T_pack + R == t * L exactly
            t, lwe = int(rng.integers(1, 64)), int(rng.integers(1, 100))
            rlwe = int(rng.integers(0, t * lwe + 1))
            tp = t * lwe - rlwe
        else:
            t = int(rng.integers(1, 1000))
            tp, lwe, rlwe = (float(x) for x in rng.uniform(0, 1e3, 3))
        want = PACK if Fraction(tp) + Fraction(rlwe) <= t * Fraction(lwe) else NO_PACK
        bad += packing_decision(t, TransferCost(tp, lwe, rlwe)) != want
    mono = True
    families = [lambda x: 50 + 3 * x, lambda x: 400 * x ** 0.5, lambda x: 10 + 7 * min(x, 32),
                lambda x: 20 * -(-x // 8) + 5]
    for tp in families:
        for lwe, rlwe in ((1.0, 0.0), (5.0, 100.0), (10.0, 1e3)):
            ds = [packing_decision(t, TransferCost(tp, lwe, rlwe)) for t in range(1, 300)]
            first = ds.index(PACK) if PACK in ds else len(ds)
            mono &= all(d == PACK for d in ds[first:])
    eng = [packing_decision(t, transfer_costs(cfg)) for t in range(1, 257)]
    first = eng.index(PACK) if PACK in eng else len(eng)
    mono &= all(d == PACK for d in eng[first:])
    verdict(8, bad == 0 and mono, f"packing rule vs inequality on 1e4 triples, disagreements={bad}; "
                                  f"monotone in t for tested cost families and engine cost={mono}")


def test_c9_multi_dimm_bit_identical(verdict, cfg):
    diffs = []
    for name in BUNDLED:
        digests = {}
        for d in (1, 2, 4):
            rep = simulate_trace(bundled_trace(name), cfg, d, seed=3, functional=True)
            if not rep.functional["verified"]:
                diffs.append(f"{name}@x{d} failed verification")
            digests[d] = rep.functional["digests"]
        if not digests[1] == digests[2] == digests[4]:
            diffs.append(name)
    verdict(9, not diffs, f"output digests on 1/2/4 DIMMs identical for {len(BUNDLED)} traces, diffs={diffs}")


def test_c10_vsp(verdict, cfg):
    m = bench.vsp_metrics(cfg, io_bandwidth=32e9)
    fw, ro = m["forward_s"], m["readout_s"]
    ok = abs(fw / 0.31e-6 - 1) <= 0.25 and abs(ro / 0.38e-3 - 1) <= 0.25
    verdict(10, ok, f"VSP forward {fw * 1e6:.3f} us (0.31 +-25%), readout {ro * 1e3:.3f} ms (0.38 +-25%)")
