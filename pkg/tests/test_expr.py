import numpy as np
import pytest

from fgauss.errors import ParseError
from fgauss.expr import parse_expression


def test_basic_arithmetic_and_functions():
    e = parse_expression("1 + t^2 * exp(-t)")
    assert e(2.0) == pytest.approx(1 + 4 * np.exp(-2.0))
    assert np.allclose(e(np.array([0.0, 1.0])), [1.0, 1 + np.exp(-1)])


def test_two_variables_and_constants():
    e = parse_expression("sin(pi*t) * (t - s)^0.5")
    assert e(0.5, 0.25) == pytest.approx(0.5)
    assert parse_expression("s")(0.3) == pytest.approx(0.3)


def test_broadcasts_constants():
    e = parse_expression("2")
    assert e(np.zeros(3)).shape == (3,)


def test_equality_by_text():
    assert parse_expression(" 1+t ") == parse_expression("1+t")
    assert hash(parse_expression("t")) == hash(parse_expression("t"))


@pytest.mark.parametrize(
    "text",
    ["", "1 +", "__import__('os')", "x + 1", "t.real", "max(t, s)", "lambda: 1", "[t]", "sin(t, s)"],
)
def test_rejects_unsafe_or_invalid(text):
    with pytest.raises(ParseError):
        parse_expression(text)


def test_error_column():
    with pytest.raises(ParseError) as info:
        parse_expression("1 + y")
    assert info.value.column == 5
