"""tcentre-hyperpol - hyperpolarization and spectral-diffusion models for silicon T centres."""

__version__ = "0.1.0"

from tcentre_hyperpol.core.contracts import (
    FitResult,
    HoleGFactors,
    OrientationMap,
    PLEMap,
    SpectrumData,
    SweepData,
)
from tcentre_hyperpol.core.lineshape import HyperpolModel, LineshapeKind, LineshapeSpec
from tcentre_hyperpol.core.spinham import FieldSpec, HoleModel, StrainConfig

__all__ = [
    "FitResult",
    "HoleGFactors",
    "OrientationMap",
    "PLEMap",
    "SpectrumData",
    "SweepData",
    "HyperpolModel",
    "LineshapeKind",
    "LineshapeSpec",
    "FieldSpec",
    "HoleModel",
    "StrainConfig",
    "__version__",
]
