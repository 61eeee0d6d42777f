import math

import pytest
from hypothesis import given, strategies as st

from apache_sim.errors import InvalidParameterError, MissingKeyError, RangeError, UndefinedRatioError
from apache_sim.memory import (DATA_BUFFER, GiB, IN_MEMORY, IO, MiB, NEAR_MEMORY, PRIVATE, PUBLIC, REGFILE, ROW_HIT,
                               ROW_MISS, BitLedger, DimmConfig, InMemoryUnit, MemoryLevelModel,
                               bandwidth_reduction_factor, buffer_fit_check, calibrate_dims, default_levels,
                               dram_access_latency, inmem_keyswitch_execute, transmitted_bits)


def test_dram_latency():
    assert dram_access_latency(ROW_HIT, 64) == pytest.approx(33.75)
    assert dram_access_latency(ROW_MISS, 64) - dram_access_latency(ROW_HIT, 64) == pytest.approx(27.5)
    assert dram_access_latency(ROW_HIT, 0) == pytest.approx(22 * 0.625)
    with pytest.raises(RangeError):
        dram_access_latency(ROW_HIT, -1)
    with pytest.raises(InvalidParameterError):
        dram_access_latency("row-maybe", 8)


def test_dimm_bandwidths():
    d = DimmConfig()
    assert d.chip_bandwidth == 3.2e9
    assert d.rank_bandwidth == 25.6e9
    assert d.aggregate_bandwidth == 204.8e9
    assert d.banks == 1024
    with pytest.raises(InvalidParameterError):
        DimmConfig(ranks=0)


def test_levels():
    lv = default_levels()
    assert set(lv) == {IO, NEAR_MEMORY, IN_MEMORY}
    assert lv[IO].bandwidth == 32e9
    assert lv[IO].transfer_ns(0) == 0.0
    assert lv[IO].transfer_ns(32) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        MemoryLevelModel("l9", 1.0)


def test_inmem_examples():
    unit = InMemoryUnit()
    unit.preload("ks")
    bits, cycles = unit.execute(PUBLIC, (1024, 4), "ks")
    assert bits == 4096 and cycles > 0
    assert unit.execute(PRIVATE, (2047, 4, 6), "ks")[0] == 49152
    assert unit.execute(PUBLIC, (0, 4), "ks") == (0, 0)
    assert unit.execute(PRIVATE, (0, 4, 2), "ks") == (0, 0)
    with pytest.raises(MissingKeyError):
        unit.execute(PUBLIC, (1024, 4), "other")
    with pytest.raises(MissingKeyError):
        inmem_keyswitch_execute(PUBLIC, (1024, 4))
    with pytest.raises(RangeError):
        unit.preload("k", rank=8)


def test_inmem_cycle_formula():
    d = DimmConfig(adder_interval=2)
    unit = InMemoryUnit(d)
    unit.preload("k")
    bits, cycles = unit.execute(PUBLIC, (2048, 8), "k", entry_words=1025)
    assert cycles == math.ceil(bits / 128) + math.ceil(bits * 1025 / 1024) * 2


def test_reduction_factor():
    assert bandwidth_reduction_factor(PRIVATE, (2047, 4, 6), 1.8 * GiB) == pytest.approx(3.14e5, rel=0.01)
    assert bandwidth_reduction_factor(PUBLIC, (1024, 4), 4096 / 8) == 1.0
    with pytest.raises(UndefinedRatioError):
        bandwidth_reduction_factor(PUBLIC, (0, 4), 1.0)


def test_calibrate_dims_grid():
    dims, r = calibrate_dims(PUBLIC, 79 * MiB, 3.05e4, (512, 1024, 2048), range(1, 17))
    assert transmitted_bits(PUBLIC, dims) * r == pytest.approx(79 * MiB * 8)
    for n in (512, 1024, 2048):
        for t in range(1, 17):
            other = bandwidth_reduction_factor(PUBLIC, (n, t), 79 * MiB)
            assert abs(math.log(r / 3.05e4)) <= abs(math.log(other / 3.05e4)) + 1e-12
    with pytest.raises(UndefinedRatioError):
        calibrate_dims(PUBLIC, 1.0, 1.0, (), ())


@given(st.integers(0, 4096), st.integers(0, 16), st.integers(0, 8))
def test_transmitted_bits_formulas(n, t, p):
    assert transmitted_bits(PUBLIC, (n, t)) == n * t
    assert transmitted_bits(PRIVATE, (n, t, p)) == (p * (n + 1) * t if n else 0)


def test_buffer_fit():
    r = buffer_fit_check(1 * MiB, DATA_BUFFER)
    assert r.fits and r.tiles == 1
    assert buffer_fit_check(48 * MiB, DATA_BUFFER).tiles == 2
    assert buffer_fit_check(120 * MiB, DATA_BUFFER).tiles == 5
    assert buffer_fit_check(10 * MiB, REGFILE).tiles == 2
    with pytest.raises(RangeError):
        buffer_fit_check(-1, DATA_BUFFER)


@given(st.integers(0, 1 << 32))
def test_buffer_tiles_cover(ws):
    r = buffer_fit_check(ws, DATA_BUFFER)
    assert r.tile_bytes <= r.capacity_bytes
    assert r.tiles * r.tile_bytes >= ws


def test_bit_ledger():
    led = BitLedger()
    led.record("op1", IO, bits_in=100)
    led.record("op1", IN_MEMORY, bits_out=50)
    led.record("op2", IO, bits_in=10, bits_out=5)
    tot = led.totals()
    assert tot[IO] == {"bits_in": 110, "bits_out": 5}
    assert led.for_op("op1")[IN_MEMORY] == (0, 50)
    text = led.to_csv()
    assert text.splitlines()[0].startswith("op_id")
    assert len(text.strip().splitlines()) == 4
    with pytest.raises(RangeError):
        led.record("op1", IO, bits_in=-1)
