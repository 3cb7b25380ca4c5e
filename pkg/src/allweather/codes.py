"""5-bit weather codes identifying which degradations an image contains.

Bit order is fixed: left to right the digits mean haze, rain streak, snow,
night, raindrop. "10000" is haze only, "00001" is raindrop only, "11111" is
all five at once. The 31 nonzero codes enumerate every hybrid condition.
"""

from __future__ import annotations

from dataclasses import dataclass

from allweather.errors import InvalidCodeError

WEATHER_TYPES = ("haze", "rainstreak", "snow", "night", "raindrop")
NUM_WEATHER_TYPES = len(WEATHER_TYPES)

GROUP_NAMES = ("single", "double", "triple", "quadruple", "pentuple")


@dataclass(frozen=True, order=True)
class WeatherCode:
    """Immutable 5-bit degradation identifier, ordered by integer value."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value < 2**NUM_WEATHER_TYPES:
            raise InvalidCodeError(f"code value {self.value} outside [0, 31]")

    @classmethod
    def from_string(cls, bits: str) -> "WeatherCode":
        if len(bits) != NUM_WEATHER_TYPES or any(c not in "01" for c in bits):
            raise InvalidCodeError(f"expected 5 binary digits, got {bits!r}")
        return cls(int(bits, 2))

    @classmethod
    def from_bits(cls, bits) -> "WeatherCode":
        bits = tuple(bool(b) for b in bits)
        if len(bits) != NUM_WEATHER_TYPES:
            raise InvalidCodeError(f"expected 5 bits, got {len(bits)}")
        value = 0
        for b in bits:
            value = (value << 1) | int(b)
        return cls(value)

    @classmethod
    def single(cls, weather: str) -> "WeatherCode":
        """Code with only the named weather type set."""
        idx = WEATHER_TYPES.index(weather)
        return cls(1 << (NUM_WEATHER_TYPES - 1 - idx))

    def to_string(self) -> str:
        return format(self.value, f"0{NUM_WEATHER_TYPES}b")

    @property
    def bits(self) -> tuple[bool, ...]:
        """(haze, rainstreak, snow, night, raindrop) flags."""
        return tuple(c == "1" for c in self.to_string())

    @property
    def weathers(self) -> tuple[str, ...]:
        """Active weather names, in application order."""
        return tuple(w for w, b in zip(WEATHER_TYPES, self.bits) if b)

    def popcount(self) -> int:
        return bin(self.value).count("1")

    @property
    def group(self) -> str:
        """Multiplicity group name (single ... pentuple)."""
        n = self.popcount()
        if n == 0:
            raise InvalidCodeError("zero code belongs to no multiplicity group")
        return GROUP_NAMES[n - 1]

    def __str__(self) -> str:
        return self.to_string()


def enumerate_codes() -> list[WeatherCode]:
    """All 31 nonzero codes in ascending binary order ("00001" first)."""
    return [WeatherCode(v) for v in range(1, 2**NUM_WEATHER_TYPES)]


def require_nonzero(code: WeatherCode) -> WeatherCode:
    if code.value == 0:
        raise InvalidCodeError("degraded condition requires at least one weather bit")
    return code
