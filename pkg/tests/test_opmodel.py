import pytest

from apache_sim.arch import IM, R1, R2, ROUTES, NmcModule
from apache_sim.config import SimConfig
from apache_sim.engine import pass_cycles
from apache_sim.errors import RoutingError
from apache_sim.kernels.modmul import MultiplierMode
from apache_sim.opmodel import FAMILY, OUTPUT_TYPE, ckks_ring, ct_bytes, operator_cost, output_bytes

CFG = SimConfig()


@pytest.mark.parametrize("op", sorted(ROUTES))
def test_every_routed_op_has_a_cost(op):
    c = operator_cost(op, CFG)
    assert c.steps and c.write_bytes > 0
    assert [s.step.name for s in c.steps] == [s.name for s in ROUTES[op]]
    assert op in OUTPUT_TYPE and op in FAMILY


def test_unknown_op():
    with pytest.raises(RoutingError):
        operator_cost("Bootstrap9000", CFG)


def test_auto_mode_follows_word_width():
    assert operator_cost("HomGate", CFG).mode() == MultiplierMode.TWO32
    assert operator_cost("CBoot", CFG).mode() == MultiplierMode.ONE64
    assert operator_cost("CBoot", CFG).mode("two32") == MultiplierMode.TWO32


def test_keyswitch_only_ops_are_in_memory():
    for op in ("PubKS", "PrivKS"):
        assert all(s.step.routine == IM for s in operator_cost(op, CFG).steps)


def test_ntt_free_ops_on_r2():
    for op in ("HAdd", "PMult"):
        assert all(s.step.routine == R2 for s in operator_cost(op, CFG).steps)
    assert any(s.step.routine == R1 for s in operator_cost("CMult", CFG).steps)


def test_ckks_overrides():
    small = operator_cost("HAdd", CFG, {"N": 1 << 14, "limbs": 8})
    big = operator_cost("HAdd", CFG)
    assert small.write_bytes == 2 * 8 * (1 << 14) * 4
    assert big.write_bytes == 2 * 44 * (1 << 16) * 4
    assert ckks_ring(CFG.ring, {"N": 1024}).ckks_N == 1024
    assert ckks_ring(CFG.ring, None) is CFG.ring


def test_sizes():
    r = CFG.ring
    assert ct_bytes("lwe", "tfhe", r) == 501 * 4
    assert ct_bytes("lwe", "cb", r) == 1025 * 8
    assert output_bytes("HomGate", r, 3) == 3 * 501 * 4
    with pytest.raises(RoutingError):
        ct_bytes("lwe", "bgv", r)


def test_pack_cost_non_decreasing_in_t():
    m = NmcModule()
    prev = 0
    for t in range(1, 129):
        c = pass_cycles(operator_cost("Pack", CFG, {"t": t}), m)
        assert c >= prev
        prev = c
