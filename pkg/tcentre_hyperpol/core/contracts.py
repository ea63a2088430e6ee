"""Data contracts shared by the models, the fit drivers and the CLI."""

from dataclasses import dataclass, field
from typing import List, Optional, Dict, Any, Sequence, Tuple

import numpy as np

from tcentre_hyperpol.core.exceptions import ValidationError, FitConvergenceError


N_ORIENTATIONS = 12


def _as_vector(values: Sequence[float], name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    if array.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite values")
    return array


@dataclass(frozen=True)
class GFactorEntry:
    """One hole g-factor value and the number of orientational subsets sharing it."""
    g_h: float
    multiplicity: int
    sigma: float = 0.0


@dataclass(frozen=True)
class HoleGFactors:
    """Grouped hole g-factors of the twelve orientational subsets."""
    entries: Tuple[GFactorEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        total = sum(entry.multiplicity for entry in self.entries)
        if total != N_ORIENTATIONS:
            raise ValidationError(
                f"multiplicities must sum to {N_ORIENTATIONS}, got {total}"
            )
        for entry in self.entries:
            if entry.multiplicity < 1:
                raise ValidationError("multiplicities must be positive integers")
            if not entry.g_h > 0:
                raise ValidationError(f"hole g-factors must be positive, got {entry.g_h}")
            if entry.sigma < 0:
                raise ValidationError("g-factor uncertainties must be non-negative")

    @classmethod
    def from_values(
        cls,
        values: Sequence[float],
        sigmas: Optional[Sequence[float]] = None,
        rel_tol: float = 1e-6,
    ) -> "HoleGFactors":
        """
        Group per-orientation g-factors into (value, multiplicity) entries.

        Args:
            values: One g-factor per orientation (twelve in total)
            sigmas: Optional per-orientation uncertainties; grouping is skipped
                when given so every orientation keeps its own sigma
            rel_tol: Relative tolerance under which two values are merged

        Returns:
            HoleGFactors grouped and sorted by ascending g_h, or one entry per
            orientation in input order when sigmas is given
        """
        values = np.asarray(values, dtype=float)
        if sigmas is not None:
            sigmas = np.asarray(sigmas, dtype=float)
            return cls(tuple(
                GFactorEntry(float(g), 1, float(s)) for g, s in zip(values, sigmas)
            ))

        entries: List[GFactorEntry] = []
        for g in np.sort(values):
            if entries and abs(g - entries[-1].g_h) <= rel_tol * abs(entries[-1].g_h):
                last = entries[-1]
                entries[-1] = GFactorEntry(last.g_h, last.multiplicity + 1, last.sigma)
            else:
                entries.append(GFactorEntry(float(g), 1))
        return cls(tuple(entries))

    @classmethod
    def uniform(cls, g_h: float) -> "HoleGFactors":
        """All twelve subsets share a single g-factor."""
        return cls((GFactorEntry(float(g_h), N_ORIENTATIONS),))

    @property
    def values(self) -> np.ndarray:
        return np.array([entry.g_h for entry in self.entries])

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([entry.multiplicity for entry in self.entries])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([entry.sigma for entry in self.entries])

    def weights(self) -> np.ndarray:
        """Equal-contribution weights, multiplicity / 12."""
        return self.multiplicities / float(N_ORIENTATIONS)

    def expanded(self) -> np.ndarray:
        """All twelve g-factors, one per orientation, ascending."""
        return np.repeat(self.values, self.multiplicities)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "entries": [
                {"g_h": e.g_h, "multiplicity": e.multiplicity, "sigma": e.sigma}
                for e in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HoleGFactors":
        return cls(tuple(GFactorEntry(**entry) for entry in data["entries"]))


@dataclass
class SweepData:
    """Amplitude versus magnetic field at fixed detuning."""
    b_gauss: np.ndarray
    amplitude: np.ndarray
    sigma: Optional[np.ndarray] = None

    MIN_POINTS = 4

    def __post_init__(self):
        self.b_gauss = _as_vector(self.b_gauss, "b_gauss")
        self.amplitude = _as_vector(self.amplitude, "amplitude")
        if self.sigma is None:
            self.sigma = np.ones_like(self.b_gauss)
        self.sigma = _as_vector(self.sigma, "sigma")

        n = len(self.b_gauss)
        if len(self.amplitude) != n or len(self.sigma) != n:
            raise ValidationError("b_gauss, amplitude and sigma must have equal length")
        if n < self.MIN_POINTS:
            raise ValidationError(f"a sweep needs at least {self.MIN_POINTS} points, got {n}")
        if np.any(np.diff(self.b_gauss) <= 0):
            raise ValidationError("b_gauss must be strictly ascending")
        if np.any(self.sigma <= 0):
            raise ValidationError("sigma values must be positive")

    def __len__(self) -> int:
        return len(self.b_gauss)


@dataclass
class SpectrumData:
    """PLE counts versus laser detuning."""
    delta_mhz: np.ndarray
    counts: np.ndarray
    sigma: Optional[np.ndarray] = None

    MIN_POINTS = 5

    def __post_init__(self):
        self.delta_mhz = _as_vector(self.delta_mhz, "delta_mhz")
        self.counts = _as_vector(self.counts, "counts")
        if self.sigma is not None:
            self.sigma = _as_vector(self.sigma, "sigma")
            if len(self.sigma) != len(self.delta_mhz):
                raise ValidationError("sigma must match delta_mhz in length")
            if np.any(self.sigma <= 0):
                raise ValidationError("sigma values must be positive")

        n = len(self.delta_mhz)
        if len(self.counts) != n:
            raise ValidationError("delta_mhz and counts must have equal length")
        if n < self.MIN_POINTS:
            raise ValidationError(f"a spectrum needs at least {self.MIN_POINTS} points, got {n}")
        if np.any(np.diff(self.delta_mhz) <= 0):
            raise ValidationError("delta_mhz must be strictly ascending")

    def __len__(self) -> int:
        return len(self.delta_mhz)


@dataclass
class PLEMap:
    """Two-dimensional PLE amplitude, rows are fields and columns detunings."""
    b_gauss: np.ndarray
    delta_mhz: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        self.b_gauss = _as_vector(self.b_gauss, "b_gauss")
        self.delta_mhz = _as_vector(self.delta_mhz, "delta_mhz")
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        expected = (len(self.b_gauss), len(self.delta_mhz))
        if self.amplitude.shape != expected:
            raise ValidationError(
                f"amplitude shape {self.amplitude.shape} does not match axes {expected}"
            )
        if len(self.b_gauss) == 0 or len(self.delta_mhz) == 0:
            raise ValidationError("map axes must be non-empty")
        if np.any(np.diff(self.b_gauss) <= 0) or np.any(np.diff(self.delta_mhz) <= 0):
            raise ValidationError("map axes must be strictly ascending")


@dataclass
class FitResult:
    """Outcome of a least-squares fit."""
    params: Dict[str, float]
    sigmas: Dict[str, float]
    covariance: np.ndarray
    chi2_reduced: float
    converged: bool
    n_iter: int
    message: str = ""
    singular: bool = False
    at_bounds: List[str] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def names(self) -> List[str]:
        return list(self.params)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a JSON-ready dictionary."""
        return {
            "params": dict(self.params),
            "sigmas": dict(self.sigmas),
            "covariance": np.asarray(self.covariance, dtype=float).tolist(),
            "chi2_reduced": self.chi2_reduced,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "message": self.message,
            "singular": self.singular,
            "at_bounds": list(self.at_bounds),
            "extras": dict(self.extras),
        }


@dataclass
class OrientationMap:
    """Fitted spectral-diffusion width over a grid of field orientations."""
    theta: np.ndarray
    phi: np.ndarray
    gamma_sd_mhz: np.ndarray
    converged: np.ndarray
    chi2_reduced: np.ndarray
    max_point: Tuple[float, float, float] = (np.nan, np.nan, np.nan)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.gamma_sd_mhz = np.asarray(self.gamma_sd_mhz, dtype=float)
        self.converged = np.asarray(self.converged, dtype=bool)
        self.chi2_reduced = np.asarray(self.chi2_reduced, dtype=float)
        shape = (len(self.theta), len(self.phi))
        for name in ("gamma_sd_mhz", "converged", "chi2_reduced"):
            if getattr(self, name).shape != shape:
                raise ValidationError(f"{name} must have shape {shape}")

        if not self.converged.any():
            raise FitConvergenceError("no orientation fits data")
        masked = np.where(self.converged, self.gamma_sd_mhz, -np.inf)
        i, j = np.unravel_index(int(np.argmax(masked)), shape)
        self.max_point = (float(self.theta[i]), float(self.phi[j]), float(self.gamma_sd_mhz[i, j]))

    def to_dict(self) -> Dict[str, Any]:
        theta, phi, gamma_sd = self.max_point
        return {
            "max_point": {"theta": theta, "phi": phi, "gamma_sd_mhz": gamma_sd},
            "n_points": int(self.converged.size),
            "n_converged": int(self.converged.sum()),
        }


@dataclass(frozen=True)
class LinewidthRow:
    """Lorentzian FWHM fitted to one fixed-field row of a PLE map."""
    b_gauss: float
    fwhm_mhz: float
    sigma_mhz: float


@dataclass
class LinewidthTable:
    """Fitted linewidth versus field; rows that failed to fit are listed in flagged."""
    rows: List[LinewidthRow]
    flagged: List[float] = field(default_factory=list)

    @property
    def b_gauss(self) -> np.ndarray:
        return np.array([row.b_gauss for row in self.rows])

    @property
    def fwhm_mhz(self) -> np.ndarray:
        return np.array([row.fwhm_mhz for row in self.rows])


@dataclass(frozen=True)
class Indistinguishability:
    """Two-photon indistinguishability estimate from the spectral-diffusion width."""
    xi: float
    gamma1_mhz: float
    gamma_sd_mhz: float
    value: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "xi": self.xi,
            "gamma1_mhz": self.gamma1_mhz,
            "gamma_sd_mhz": self.gamma_sd_mhz,
            "value": self.value,
        }
