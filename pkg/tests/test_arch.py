import pytest
from hypothesis import given, strategies as st

from apache_sim.arch import (BR_CHAIN, DECOMP, IM, LABEL_NON, LABEL_NTT, MADD, MMULT, NTT, R1, R2, FuConfig,
                             FuInstance, NmcModule, PipelineRoutine, TimingSegment, chain_fill, chain_segments,
                             check_no_overlap, configure_fu_bitwidth, mode_switch_cycles, pipeline_latency,
                             route_operation, union_length)
from apache_sim.errors import (CapacityError, ConfigurationError, InvalidParameterError, InvariantViolation,
                               RoutingError)
from apache_sim.kernels.modmul import MultiplierMode


def test_bitwidth_doubles_lanes_and_is_idempotent():
    fu = FuInstance(MMULT, 5, 256)
    two = configure_fu_bitwidth(fu, "two32")
    assert two.effective_lanes == 2 * fu.effective_lanes
    assert configure_fu_bitwidth(two, "two32") is two
    assert two.throughput == 2 * fu.throughput
    assert two.lane_width == 32
    assert mode_switch_cycles(fu, "two32") == 5 and mode_switch_cycles(two, "two32") == 0


def test_bitwidth_not_configurable():
    with pytest.raises(ConfigurationError):
        configure_fu_bitwidth(FuInstance(DECOMP, 4, 256), "two32")


@pytest.mark.parametrize("kind,depth,lanes", [(NTT, 100, 64), (NTT, 300, 64), (MADD, 4, 256), (MMULT, 6, 256),
                                              ("automorph", 10, 128), ("bogus", 1, 1)])
def test_fu_constraints(kind, depth, lanes):
    with pytest.raises(ConfigurationError):
        FuInstance(kind, depth, lanes)


def test_r2_has_no_ntt():
    with pytest.raises(ConfigurationError):
        PipelineRoutine(R2, (NTT, MMULT))


def test_fu_config_validation():
    with pytest.raises(ConfigurationError):
        FuConfig(r1_share=0.4)
    with pytest.raises(ConfigurationError):
        FuConfig(mmult_count=1)


def test_routing():
    (hadd,) = route_operation("HAdd")
    assert hadd.routine == R2
    cmux = route_operation("CMUX")
    ext = [s for s in cmux if s.routine == R1]
    assert len(ext) == 1 and ext[0].chain == (DECOMP, NTT, MMULT, MADD)
    assert route_operation([]) == []
    assert [s.routine for s in route_operation({"op": "HomGate"})] == [R2, R1, IM]
    assert all(s.routine != R2 for s in route_operation("HAdd", "single"))
    with pytest.raises(RoutingError):
        route_operation("Bootstrap9000")


def test_labels():
    for op in ("HAdd", "PMult", "CMUX", "HomGate"):
        for s in route_operation(op):
            if s.routine == R2:
                assert s.label == LABEL_NON and NTT not in s.chain
    assert route_operation("BlindRotate")[0].label == LABEL_NTT


def test_r2_small_batch_cycles():
    m = NmcModule()
    segs = chain_segments(R2, (MMULT, MADD), m.fus(R2), 64)
    assert max(s.end for s in segs) == 9


def test_zero_size():
    assert pipeline_latency("HAdd", NmcModule(), 0) == []
    assert chain_segments(R1, (NTT,), NmcModule().fus(R1), 0) == []


def test_regfile_capacity():
    with pytest.raises(CapacityError):
        pipeline_latency("HAdd", NmcModule(), 2 * 1024 * 1024)


def test_cmux_fill():
    m = NmcModule()
    fill = sum(chain_fill(s.chain, m.fus(s.routine)) for s in route_operation("CMUX"))
    assert fill <= 350


def test_two32_module_throughput():
    one, two = NmcModule(), NmcModule(mode="two32")
    assert two.fus(R1)[NTT].throughput == 2 * one.fus(R1)[NTT].throughput
    assert two.word_bytes == 4
    a = max(s.end for s in pipeline_latency("PMult", one, 1 << 16))
    b = max(s.end for s in pipeline_latency("PMult", two, 1 << 16))
    assert b < a


def test_pipeline_segments_do_not_overlap():
    segs = pipeline_latency("HomGate", NmcModule(), 4096)
    check_no_overlap(segs)
    assert {s.routine for s in segs} == {R1, R2}
    chain_stages = [s for s in segs if s.routine == R1]
    assert [s.fu.split(".")[1] for s in chain_stages] == list(BR_CHAIN)


def test_overlap_detected():
    with pytest.raises(InvariantViolation):
        check_no_overlap([TimingSegment("R1.ntt", 0, 10, LABEL_NTT, R1), TimingSegment("R1.ntt", 5, 12, LABEL_NTT, R1)])


def test_segment_validation():
    with pytest.raises(InvalidParameterError):
        TimingSegment("R1.ntt", 5, 5, LABEL_NTT, R1)
    with pytest.raises(InvalidParameterError):
        TimingSegment("R1.ntt", 0, 5, "other", R1)


@given(st.lists(st.tuples(st.integers(0, 200), st.integers(1, 50)), max_size=30))
def test_union_length_matches_cell_count(raw):
    iv = [(s, s + d) for s, d in raw]
    cells = set()
    for s, e in iv:
        cells.update(range(s, e))
    assert union_length(iv) == len(cells)


@given(st.integers(1, 1 << 20), st.sampled_from(["one64", "two32"]))
def test_stream_bound(size, mode):
    m = NmcModule(mode=mode)
    segs = chain_segments(R1, (NTT, MMULT, MADD), m.fus(R1), size)
    lanes = m.fus(R1)[NTT].throughput
    assert max(s.end for s in segs) == 200 + 5 + 3 + -(-size // lanes)
    assert all(s.length >= -(-size // lanes) for s in segs)
