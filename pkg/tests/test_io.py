import json
import math

from hypothesis import given, strategies as st

from misspec.io import dumps, format_float


def test_positional_floats():
    assert format_float(0.1) == "0.10000000000000001"
    assert "e" not in format_float(1e-9)
    assert "e" not in format_float(1e22)
    assert format_float(2.0) == "2.0"
    assert format_float(0.0) == "0.0"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip(x):
    assert float(format_float(x)) == x


def test_stable_json():
    text = dumps({"b": 1.5, "a": [1, None, float("nan")], "c": {"y": True, "x": "s"}})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    d = json.loads(text)
    assert d["a"] == [1, None, None]
    assert d["b"] == 1.5
    assert math.isclose(json.loads(dumps(1 / 3)), 1 / 3, rel_tol=0, abs_tol=0)
