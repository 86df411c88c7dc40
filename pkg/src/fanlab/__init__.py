"""Fourier Analysis Network layers, a small autograd engine and the
experiment harness around them."""

from fanlab.errors import (ConfigError, ContractError, DimensionError, DivergenceError, FanlabError,
                           NonFiniteError, SpecError)

__version__ = "0.1.0"

__all__ = ["ConfigError", "ContractError", "DimensionError", "DivergenceError", "FanlabError",
           "NonFiniteError", "SpecError", "__version__"]
