"""Core package for tcentre-hyperpol."""

from tcentre_hyperpol.core.contracts import (
    FitResult,
    HoleGFactors,
    GFactorEntry,
    SweepData,
    SpectrumData,
    PLEMap,
)
from tcentre_hyperpol.core.exceptions import (
    HyperpolError,
    ValidationError,
    DataParseError,
)

__all__ = [
    'FitResult',
    'HoleGFactors',
    'GFactorEntry',
    'SweepData',
    'SpectrumData',
    'PLEMap',
    'HyperpolError',
    'ValidationError',
    'DataParseError',
]
