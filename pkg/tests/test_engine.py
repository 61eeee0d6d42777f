import json
import math
from dataclasses import replace

import pytest

from apache_sim.arch import LABEL_NON, LABEL_NTT, R1, R2, TimingSegment
from apache_sim.engine import (Engine, SimReport, check_report, plan, run_simulation, simulate_trace,
                               throughput_report, utilization_metrics, utilization_terms)
from apache_sim.errors import ConfigurationError, InvalidParameterError, InvariantViolation, UndefinedUtilizationError
from apache_sim.memory import IN_MEMORY, IO, NEAR_MEMORY
from apache_sim.opmodel import ct_bytes
from apache_sim.workloads import bundled_trace, op_batch


def seg(routine, s, e, label=LABEL_NTT, fu="x"):
    return TimingSegment(f"{routine}.{fu}", s, e, label, routine)


def test_utilization_examples():
    base = [seg(R1, 0, 800), seg(R1, 800, 1000, LABEL_NON, "madd"), seg(R2, 700, 1000, LABEL_NON)]
    assert utilization_metrics(base) == pytest.approx((0.8, 0.8))
    absorbed = [seg(R1, 0, 800), seg(R2, 0, 200, LABEL_NON)]
    assert utilization_metrics(absorbed)[1] == pytest.approx(1.0)
    assert utilization_metrics([seg(R1, 0, 500)]) == (1.0, 1.0)
    with pytest.raises(UndefinedUtilizationError):
        utilization_metrics([seg(R2, 0, 10, LABEL_NON)])
    with pytest.raises(UndefinedUtilizationError):
        utilization_metrics([])


def test_utilization_terms_use_union():
    segs = [seg(R1, 0, 100, fu="a"), seg(R1, 50, 150, fu="b"), seg(R1, 100, 150, LABEL_NON, "c")]
    assert utilization_terms(segs) == (150, 50, 150)


def test_throughput_report():
    rep = SimReport(makespan_cycles=10**6, op_counts={"HAdd": 1})
    assert throughput_report(rep) == {"HAdd": pytest.approx(1000.0)}
    assert throughput_report(SimReport(op_counts={"HAdd": 1})) == {"HAdd": 0.0}
    # the one-time preload is excluded from the steady-state window
    rep = SimReport(makespan_cycles=3 * 10**6, setup_cycles=2 * 10**6, op_counts={"HAdd": 2})
    assert throughput_report(rep) == {"HAdd": pytest.approx(2000.0)}
    assert throughput_report(SimReport(makespan_cycles=5, setup_cycles=5, op_counts={"HAdd": 1})) == {"HAdd": 0.0}


def test_empty_schedule(cfg):
    rep = simulate_trace([], cfg, 2)
    assert rep.makespan_cycles == 0 and rep.op_counts == {}


def test_single_hadd_latency(cfg):
    tr = [{"op": "Input", "id": "x", "outputs": ["x", "y"], "params": {"type": "ckks"}},
          {"op": "HAdd", "id": "h", "inputs": ["x", "y"], "outputs": ["z"]}]
    rep = simulate_trace(tr, cfg, 1, functional=False)
    r, d = cfg.ring, cfg.dimm
    ct = ct_bytes("rlwe", "ckks", r)
    setup = math.ceil(2 * ct / cfg.scheduler.io_bandwidth * 1e9)
    mem = math.ceil(ct / d.aggregate_bandwidth * 1e9)
    row_miss = math.ceil((d.tRP + d.tRCD + d.tCAS) * d.tck_ns)
    lanes = cfg.fu.madd_lanes * 2  # one R2 adder in two32 mode
    pipe = cfg.fu.madd_depth + math.ceil(2 * r.ckks_limbs * r.ckks_N / lanes)
    node = rep.nodes["h"]
    assert rep.setup_cycles == setup
    assert node["start"] == setup + 2 * mem + row_miss
    assert node["done"] - node["start"] == pipe
    assert rep.makespan_cycles == node["done"] + mem  # result written back


def test_determinism(cfg):
    a = simulate_trace(op_batch("HomGate", 16, 3), cfg, 2, seed=3, functional=2)
    b = simulate_trace(op_batch("HomGate", 16, 3), cfg, 2, seed=3, functional=2)
    assert a.dumps() == b.dumps()
    assert a.functional["executed"] == 2 and a.functional["verified"]


@pytest.mark.parametrize("name", ["mixed_ckks", "mnist", "vsp_toy"])
def test_run_invariants(cfg, name):
    rep = simulate_trace(bundled_trace(name), cfg, 2, functional=False)
    check_report(rep)
    for lvl in (IO, NEAR_MEMORY, IN_MEMORY):
        assert rep.bandwidth[lvl]["peak"] <= rep.bandwidth[lvl]["ceiling"] * (1 + 1e-9)
    assert rep.utl_ntt_prime >= rep.utl_ntt
    assert rep.makespan_cycles >= max(v["done"] for v in rep.nodes.values())
    for v in rep.nodes.values():
        assert v["ready"] <= v["start"] <= v["done"]
    assert all(0 <= u <= 1 for u in rep.fu_utilization.values())


def test_bits_ledger_monotone(cfg):
    rep = simulate_trace(op_batch("PrivKS", 8), cfg, 1, functional=False)
    assert rep.keyswitch["calls"] == {"private": 8}
    r = cfg.ring
    assert rep.keyswitch["bits"]["private"] == 8 * r.privks_p * (r.privks_n + 1) * r.privks_t
    assert rep.ledger_totals[IN_MEMORY]["bits_in"] == rep.keyswitch["bits"]["private"]


def test_single_topology_never_uses_r2(cfg):
    c1 = cfg.with_fu(topology="single")
    rep = simulate_trace(bundled_trace("mixed_ckks"), c1, 1, functional=False)
    assert not any(s.routine == R2 for s in rep.segments)
    assert rep.utl_ntt == pytest.approx(rep.utl_ntt_prime)


def test_dual_beats_single_on_mixed(cfg):
    dual = simulate_trace(bundled_trace("mixed_ckks"), cfg, 1, functional=False)
    single = simulate_trace(bundled_trace("mixed_ckks"), cfg.with_fu(topology="single"), 1, functional=False)
    assert dual.makespan_cycles <= single.makespan_cycles


def test_mode_switch_counted(cfg):
    tr = [{"op": "Input", "id": "a", "outputs": ["a", "b"], "params": {"type": "bit"}},
          {"op": "Input", "id": "c", "outputs": ["c"], "params": {"type": "bit_big"}},
          {"op": "HomGate", "id": "g", "inputs": ["a", "b"], "outputs": ["o1"], "params": {"gate": "NAND"}},
          {"op": "CBoot", "id": "cb", "inputs": ["c"], "outputs": ["o2"]}]
    rep = simulate_trace(tr, cfg, 1, functional=False)
    assert rep.mode_switches == 1  # 32-bit gate key, then 64-bit circuit bootstrap
    assert simulate_trace(tr, cfg.with_fu(mode="one64"), 1, functional=False).mode_switches == 0


def test_check_report_rejects():
    bad = SimReport(makespan_cycles=10, utl_ntt=0.9, utl_ntt_prime=0.8)
    with pytest.raises(InvariantViolation):
        check_report(bad)
    with pytest.raises(InvariantViolation):
        check_report(SimReport(makespan_cycles=10, utl_ntt=1.5))
    with pytest.raises(InvariantViolation):
        check_report(SimReport(makespan_cycles=5, nodes={"a": {"start": 0, "done": 9}}))


def test_bad_assignment(cfg):
    sched = plan(op_batch("HAdd", 2), cfg, 2)
    sched.assignment["n0"] = 7
    with pytest.raises(InvalidParameterError):
        run_simulation(sched, cfg, functional=False)


def test_r1_share_floor(cfg):
    with pytest.raises(ConfigurationError):
        cfg.with_fu(r1_share=0.3)


def test_report_serialization(cfg):
    rep = simulate_trace(op_batch("PubKS", 4), cfg, 1, functional=False)
    js = json.loads(rep.dumps())
    assert js["op_counts"] == {"PubKS": 4}
    assert "PubKS" in js["keyswitch"]["reduction"]
    rows = rep.to_csv().splitlines()
    assert rows[0] == "section,key,value"
    assert any(r.startswith("reduction,PubKS,") for r in rows)
    assert rep.makespan_s == rep.makespan_cycles / rep.clock_hz
    assert "segments" in rep.to_json(include_segments=True)


def test_engine_reuses_context(cfg):
    from apache_sim.functional import FunctionalContext

    ctx = FunctionalContext(5)
    eng = Engine(cfg, 5, functional=True, context=ctx)
    rep = eng.run(plan(op_batch("HAdd", 3), cfg, 1))
    assert rep.functional["verified"] and len(ctx.store) >= 9


def test_throughput_scales_with_dimms(cfg):
    one = simulate_trace(op_batch("HomGate", 128), cfg, 1, functional=False).op_per_s["HomGate"]
    two = simulate_trace(op_batch("HomGate", 128), cfg, 2, functional=False).op_per_s["HomGate"]
    assert two > one
