from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from kslat.errors import ParseError
from kslat.exact import I_UNIT, ONE, ZERO, Surd

rationals = st.fractions(min_value=-20, max_value=20, max_denominator=12)
radicands = st.sampled_from([1, 2, 3, 5, 6, -1, -2])


@st.composite
def surds(draw):
    return sum((Surd.rational(draw(rationals)) * Surd.sqrt(draw(radicands)) for _ in range(draw(st.integers(0, 3)))), ZERO)


def test_sqrt_squares_back():
    assert Surd.sqrt(2) * Surd.sqrt(2) == 2
    assert Surd.sqrt(8) == 2 * Surd.sqrt(2)
    assert Surd.sqrt(-1) == I_UNIT
    assert I_UNIT * I_UNIT == -1


def test_parse_forms():
    assert Surd.parse("1/2") == Fraction(1, 2)
    assert Surd.parse("1+√2") == 1 + Surd.sqrt(2)
    assert Surd.parse("-3sqrt(5)") == -3 * Surd.sqrt(5)
    assert Surd.parse("2i") == 2 * I_UNIT
    assert Surd.parse("1/3√3") == Surd.sqrt(3) / 3
    with pytest.raises(ParseError):
        Surd.parse("1.5")


def test_str_roundtrip():
    for text in ["0", "1", "-1/2", "1/2√2", "5i", "1+√2"]:
        assert Surd.parse(str(Surd.parse(text))) == Surd.parse(text)


def test_inverse_of_multiquadratic():
    x = 1 + Surd.sqrt(2) + Surd.sqrt(3)
    assert x * x.inverse() == ONE
    assert abs(complex(x.inverse()) - 1 / (1 + 2**0.5 + 3**0.5)) < 1e-12


def test_zero_division():
    with pytest.raises(ZeroDivisionError):
        ONE / ZERO


@given(surds(), surds(), surds())
def test_field_axioms(a, b, c):
    assert (a + b) * c == a * c + b * c
    assert a * b == b * a
    assert (a - a).is_zero()
    assert abs(complex(a * b) - complex(a) * complex(b)) < 1e-8


@given(surds())
def test_inverse_and_conjugate(a):
    if not a.is_zero():
        assert a * a.inverse() == ONE
    assert abs(complex(a.conjugate()) - complex(a).conjugate()) < 1e-9
    assert (a * a.conjugate()).is_real()


@given(surds())
def test_json_roundtrip(a):
    assert Surd.from_json(a.to_json()) == a
    assert hash(Surd.from_json(a.to_json())) == hash(a)
