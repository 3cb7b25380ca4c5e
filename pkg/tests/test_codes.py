from collections import Counter

import pytest

from allweather.codes import GROUP_NAMES, WEATHER_TYPES, WeatherCode, enumerate_codes
from allweather.errors import InvalidCodeError


def test_enumeration_count_and_order():
    codes = enumerate_codes()
    assert len(codes) == 31
    assert [c.value for c in codes] == list(range(1, 32))
    assert codes[0].to_string() == "00001"
    assert codes[-1].to_string() == "11111"


def test_popcount_histogram():
    hist = Counter(c.popcount() for c in enumerate_codes())
    assert hist == {1: 5, 2: 10, 3: 10, 4: 5, 5: 1}


def test_enumeration_is_bijection_onto_nonzero_ints():
    values = {c.value for c in enumerate_codes()}
    assert values == set(range(1, 32))


def test_string_round_trip():
    for code in enumerate_codes():
        assert WeatherCode.from_string(code.to_string()) == code
        assert WeatherCode.from_bits(code.bits) == code


def test_bit_order_matches_weather_names():
    assert WeatherCode.from_string("10000").weathers == ("haze",)
    assert WeatherCode.from_string("00001").weathers == ("raindrop",)
    assert WeatherCode.from_string("10010").weathers == ("haze", "night")
    assert WeatherCode.single("snow").to_string() == "00100"
    assert len(WEATHER_TYPES) == 5


def test_group_names():
    assert WeatherCode.from_string("01000").group == "single"
    assert WeatherCode.from_string("11111").group == "pentuple"
    assert GROUP_NAMES == ("single", "double", "triple", "quadruple", "pentuple")


def test_invalid_codes_rejected():
    with pytest.raises(InvalidCodeError):
        WeatherCode.from_string("0101")
    with pytest.raises(InvalidCodeError):
        WeatherCode.from_string("0101x")
    with pytest.raises(InvalidCodeError):
        WeatherCode(32)
    with pytest.raises(InvalidCodeError):
        WeatherCode(0).group
