"""Attention-driven delayed stochastic volatility: simulation, estimation,
risk-neutral pricing and calibration."""

__version__ = "0.1.0"

from .core import (DomainError, InterestHistory, ModelParams, NumericalFault, OptionQuote, RNParams,
                   SeriesPair, validate_params)

__all__ = ["DomainError", "NumericalFault", "InterestHistory", "ModelParams", "RNParams", "SeriesPair",
           "OptionQuote", "validate_params", "__version__"]
