"""Deterministic simulation and analysis of flocking and coordination dynamics."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BehavdynError,
    DegenerateDenominatorError,
    DegenerateInputError,
    IntegrationDivergedError,
    InvalidArgumentError,
)
