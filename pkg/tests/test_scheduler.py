import io
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from apache_sim.config import load_config
from apache_sim.engine import plan, transfer_costs
from apache_sim.errors import (CycleError, DanglingReferenceError, FormatError, InfeasibleError,
                               InvalidParameterError)
from apache_sim.scheduler import (NO_PACK, PACK, TransferCost, aggregation_plan, assign_dimms, build_task_graph,
                                  packing_decision, read_trace, transferred_bytes, write_trace)


def inp(*cts):
    return [{"op": "Input", "id": c, "outputs": [c], "params": {"type": "bit"}} for c in cts]


def op(nid, ins, outs, **params):
    return {"op": "HomGate", "id": nid, "inputs": list(ins), "outputs": list(outs), "params": params}


def chain():
    return inp("x", "y") + [op("a", ["x", "y"], ["ca"]), op("b", ["ca", "y"], ["cb"]), op("c", ["cb", "x"], ["cc"])]


def independent(n):
    recs = inp("x", "y")
    return recs + [op(f"g{i}", ["x", "y"], [f"o{i}"]) for i in range(n)]


def test_empty():
    g = build_task_graph([])
    assert len(g) == 0 and g.edges == [] and g.order_free_pairs() == 0


def test_chain_edges():
    g = build_task_graph(chain())
    assert sorted(g.edges) == [("a", "b"), ("b", "c")]
    assert g.order_free_pairs() == 0
    assert g.depends("a", "c") and not g.independent("a", "c")
    assert not any(n.order_free for n in g.nodes.values())


def test_independent_gates():
    g = build_task_graph(independent(512))
    assert all(n.order_free for n in g.nodes.values())
    assert g.order_free_pairs() == 512 * 511 // 2


def test_round_robin():
    g = build_task_graph(independent(8))
    a = assign_dimms(g, 4)
    assert sorted(list(a.values()).count(d) for d in range(4)) == [2, 2, 2, 2]


def test_chain_stays_together():
    a = assign_dimms(build_task_graph(chain()), 4)
    assert set(a.values()) == {0}


def test_pin_and_capacity():
    g = build_task_graph(inp("x", "y") + [op("p", ["x", "y"], ["o"], dimm=5)])
    assert assign_dimms(g, 4) == {"p": 1}
    with pytest.raises(InfeasibleError):
        assign_dimms(build_task_graph(independent(2)), 2, capacity_bytes=10, working_set=lambda n: 20)
    with pytest.raises(InfeasibleError):
        assign_dimms(build_task_graph(independent(3)), 1, capacity_bytes=30, working_set=lambda n: 20)
    with pytest.raises(InvalidParameterError):
        assign_dimms(build_task_graph(independent(1)), 0)


def test_errors():
    with pytest.raises(CycleError):
        build_task_graph([op("a", ["cb"], ["ca"]), op("b", ["ca"], ["cb"])])
    with pytest.raises(DanglingReferenceError):
        build_task_graph(inp("x") + [op("a", ["x", "ghost"], ["o"])])
    with pytest.raises(FormatError):
        build_task_graph([{"id": "a"}])
    with pytest.raises(FormatError):
        build_task_graph(inp("x") + [op("a", ["x"], ["o"]), op("a", ["x"], ["p"])])
    with pytest.raises(FormatError):
        build_task_graph(inp("x") + [op("a", ["x"], ["x"])])
    with pytest.raises(FormatError):
        read_trace(io.StringIO("{not json}\n"))


def test_trace_roundtrip():
    buf = io.StringIO()
    write_trace(chain(), buf)
    buf.seek(0)
    assert read_trace(io.StringIO("# comment\n\n" + buf.getvalue())) == chain()


def test_packing_examples():
    assert packing_decision(1, TransferCost(0, 3.0, 3.0)) == PACK
    assert packing_decision(4, TransferCost(10, 1, 5)) == NO_PACK
    assert packing_decision(64, TransferCost(10, 1, 5)) == PACK
    assert packing_decision(15, TransferCost(10, 1, 5)) == PACK  # equality
    with pytest.raises(InvalidParameterError):
        packing_decision(0, TransferCost(0, 1, 1))
    with pytest.raises(InvalidParameterError):
        TransferCost(0, -1, 1)


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6), st.integers(1, 4096))
def test_packing_matches_inequality(tp, lwe, rlwe, t):
    want = PACK if Fraction(tp) + rlwe <= t * Fraction(lwe) else NO_PACK
    assert packing_decision(t, TransferCost(tp, lwe, rlwe)) == want


concave = st.one_of(
    st.tuples(st.floats(0, 100), st.floats(0, 10)).map(lambda p: lambda t: p[0] + p[1] * t),
    st.tuples(st.floats(0, 100), st.floats(0, 10), st.integers(1, 64)).map(
        lambda p: lambda t: p[0] + p[1] * min(t, p[2])),
    st.tuples(st.floats(0, 100), st.floats(0, 50)).map(lambda p: lambda t: p[0] + p[1] * t ** 0.5),
)


@given(concave, st.floats(0.01, 10), st.floats(0, 100))
def test_packing_monotone_for_concave_cost(tp, lwe, rlwe):
    costs = TransferCost(tp, lwe, rlwe)
    seen_pack = False
    for t in range(1, 200):
        d = packing_decision(t, costs)
        assert not (seen_pack and d == NO_PACK)
        seen_pack |= d == PACK


@given(st.integers(0, 100), st.integers(1, 32), st.integers(0, 100), st.integers(1, 20), st.integers(0, 100),
       st.integers(1, 64), st.integers(2, 6))
def test_packing_monotone_along_multiples(a, c, b, lwe, rlwe, t, k):
    # a*ceil(t/c) + b is non-decreasing and subadditive but not concave
    costs = TransferCost(lambda x: a * -(-x // c) + b, lwe, rlwe)
    if packing_decision(t, costs) == PACK:
        assert packing_decision(k * t, costs) == PACK


def test_subadditive_step_cost_need_not_be_monotone():
    # non-decreasing and subadditive, yet packing stops paying off at t = 101
    costs = TransferCost(lambda x: 100 if x <= 100 else 200, 1, 0)
    assert packing_decision(100, costs) == PACK
    assert packing_decision(101, costs) == NO_PACK


def test_engine_pack_rule_monotone():
    costs = transfer_costs(load_config())
    ds = [packing_decision(t, costs) for t in range(1, 257)]
    first = ds.index(PACK) if PACK in ds else len(ds)
    assert all(d == PACK for d in ds[first:])


def _tree():
    # four producers: three pinned on DIMM 0, one on DIMM 1; the reducer is free
    recs = inp("x", "y")
    recs += [op(f"p{i}", ["x", "y"], [f"c{i}"], dimm=0 if i < 3 else 1) for i in range(4)]
    recs.append(op("r", [f"c{i}" for i in range(4)], ["out"]))
    return recs


def test_aggregation_majority():
    g = build_task_graph(_tree())
    a = assign_dimms(g, 2)
    a["r"] = 1
    new, trs = aggregation_plan(g, a, lambda ct: ("lwe", 100))
    assert new["r"] == 0
    assert [(t.ct, t.src_dimm, t.dst_dimm) for t in trs] == [("c3", 1, 0)]
    assert transferred_bytes(g, new, lambda ct: ("lwe", 100)) == 100


def test_aggregation_packs_groups():
    recs = inp("x", "y") + [op(f"p{i}", ["x", "y"], [f"c{i}"], dimm=1) for i in range(8)]
    recs.append(op("r", [f"c{i}" for i in range(8)], ["out"], dimm=0))
    g = build_task_graph(recs)
    a = assign_dimms(g, 2)
    _, trs = aggregation_plan(g, a, lambda ct: ("lwe", 100), TransferCost(0, 1.0, 2.0), lambda t: 300)
    assert len(trs) == 8 and all(t.format == PACK and t.group == 0 for t in trs)
    assert sum(t.nbytes for t in trs) == pytest.approx(300, abs=8)


def test_single_dimm_no_transfers():
    cfg = load_config()
    assert plan(_tree(), cfg, 1).transfers == []
    sched = plan(_tree(), cfg, 2)
    assert sched.assignment["r"] == 0
    assert len(sched.transfers) == 1
    js = sched.to_json()
    assert js["n_dimms"] == 2 and len(js["nodes"]) == 5
