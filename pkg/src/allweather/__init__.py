"""All-in-one hybrid adverse-weather toolkit.

Synthesizes images degraded by arbitrary combinations of haze, rain streaks,
snow, night and raindrops, trains a codebook-aided restoration network with an
output-space adversarial scheme, and evaluates restoration quality with
multiplicity-grouped PSNR/SSIM reports.
"""

__version__ = "0.1.0"

from allweather.codes import WeatherCode, enumerate_codes
from allweather.errors import (
    InvalidCodeError,
    ConfigError,
    DivergenceError,
    ParameterError,
    ShapeError,
    UntrainedModelError,
)

__all__ = [
    "WeatherCode",
    "enumerate_codes",
    "ShapeError",
    "ParameterError",
    "InvalidCodeError",
    "ConfigError",
    "DivergenceError",
    "UntrainedModelError",
]
