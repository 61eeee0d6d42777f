import pytest
from hypothesis import given, strategies as st

from apache_sim.errors import InvalidParameterError, PreconditionError
from apache_sim.kernels.modmul import MultiplierMode, barrett_reduce, karatsuba_mul, mod_mul_configurable


def test_one64_small():
    assert mod_mul_configurable(MultiplierMode.ONE64, 5, 7, 17) == 1


def test_zero_operand():
    assert mod_mul_configurable("one64", 0, 16, 17) == 0
    assert mod_mul_configurable("two32", (0, 0), (9, 2**31 - 2), 2**31 - 1) == (0, 0)


def test_two32_lanes():
    assert mod_mul_configurable("two32", (3, 5), (7, 11), 2**31 - 1) == (21, 55)


def test_operand_out_of_range():
    with pytest.raises(PreconditionError):
        mod_mul_configurable("one64", 17, 1, 17)
    with pytest.raises(PreconditionError):
        mod_mul_configurable("two32", (1, 2**31 - 1), (1, 1), 2**31 - 1)


@pytest.mark.parametrize("q", [0, 1])
def test_degenerate_modulus(q):
    with pytest.raises(InvalidParameterError):
        mod_mul_configurable("one64", 0, 0, q)


def test_lane_modulus_too_wide():
    with pytest.raises(InvalidParameterError):
        mod_mul_configurable("two32", (1, 1), (1, 1), (1 << 33) - 1)


def test_mode_lanes():
    assert MultiplierMode.TWO32.lanes == 2 * MultiplierMode.ONE64.lanes
    assert MultiplierMode.TWO32.lane_width == 32


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_karatsuba_is_exact(x, y):
    assert karatsuba_mul(x, y, 64) == x * y


@given(st.integers(2, 2**64 - 1), st.data())
def test_one64_matches_python(q, data):
    x = data.draw(st.integers(0, q - 1))
    y = data.draw(st.integers(0, q - 1))
    assert mod_mul_configurable("one64", x, y, q) == x * y % q
    assert barrett_reduce(x * y, q) == x * y % q


@given(st.integers(2, 2**32 - 1), st.integers(2, 2**32 - 1), st.data())
def test_two32_equals_two_independent_lanes(q0, q1, data):
    xs = (data.draw(st.integers(0, q0 - 1)), data.draw(st.integers(0, q1 - 1)))
    ys = (data.draw(st.integers(0, q0 - 1)), data.draw(st.integers(0, q1 - 1)))
    got = mod_mul_configurable("two32", xs, ys, (q0, q1))
    assert got == (xs[0] * ys[0] % q0, xs[1] * ys[1] % q1)
    assert got == (mod_mul_configurable("one64", xs[0], ys[0], q0), mod_mul_configurable("one64", xs[1], ys[1], q1))
