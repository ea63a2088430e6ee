"""Spectral profiles and hyperpolarization amplitude models.

All amplitude models are normalized to 1 at zero field and zero detuning.
Frequencies are in MHz and fields in gauss.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq
from scipy.special import erfc

from tcentre_hyperpol.core.contracts import HoleGFactors, SpectrumData
from tcentre_hyperpol.core.exceptions import NumericalError, ValidationError
from tcentre_hyperpol.core.spinham import MU_B_MHZ_PER_GAUSS

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray, Sequence[float]]

FOUR_LN2 = 4.0 * np.log(2.0)
DEFAULT_G_E = 2.005

# convolution quadrature
QUADRATURE_HALF_SPAN = 5.0
QUADRATURE_MIN_POINTS = 2001
QUADRATURE_MAX_POINTS = 400001
QUADRATURE_POINTS_PER_WIDTH = 8
QUADRATURE_TOL = 1e-4


class LineshapeKind(str, Enum):
    LORENTZIAN = "lorentzian"
    GAUSSIAN = "gaussian"
    GLP = "glp"


@dataclass(frozen=True)
class LineshapeSpec:
    """Normalized symmetric profile of a given kind and full width at half maximum."""
    kind: LineshapeKind
    fwhm: float

    def __post_init__(self):
        object.__setattr__(self, "kind", LineshapeKind(self.kind))
        if not self.fwhm > 0:
            raise ValidationError(f"fwhm must be positive, got {self.fwhm}")


def _glp_shape(x: ArrayLike, component_fwhm: float) -> np.ndarray:
    """Unnormalized Gauss-Lorentz product with equal component widths, 1 at x = 0."""
    u = 4.0 * np.square(x) / component_fwhm ** 2
    return np.exp(-np.log(2.0) * u) / (1.0 + u)


@lru_cache(maxsize=None)
def glp_component_ratio() -> float:
    """Component FWHM of a Gauss-Lorentz product whose own FWHM is 1."""
    return brentq(lambda w: _glp_shape(0.5, w) - 0.5, 1.0, 4.0, xtol=1e-15, rtol=1e-15)


def glp_component_fwhm(fwhm: float) -> float:
    """Common component FWHM that makes the product's FWHM equal to fwhm."""
    return glp_component_ratio() * fwhm


def profile(spec: LineshapeSpec, x: ArrayLike) -> np.ndarray:
    """
    Evaluate a unit-area profile.

    Args:
        spec: Lineshape kind and FWHM in MHz
        x: Offsets from line centre in MHz

    Returns:
        Density in 1/MHz
    """
    x = np.asarray(x, dtype=float)
    w = spec.fwhm
    if spec.kind is LineshapeKind.LORENTZIAN:
        return 2.0 / (np.pi * w) / (1.0 + 4.0 * x ** 2 / w ** 2)
    if spec.kind is LineshapeKind.GAUSSIAN:
        return np.sqrt(FOUR_LN2 / np.pi) / w * np.exp(-FOUR_LN2 * x ** 2 / w ** 2)

    # closed-form area of exp(-4 ln2 x^2/w^2) / (1 + 4 x^2/w^2) is pi w erfc(sqrt(ln 2))
    wc = glp_component_fwhm(w)
    return _glp_shape(x, wc) / (np.pi * wc * erfc(np.sqrt(np.log(2.0))))


@dataclass(frozen=True)
class TransitionSplitting:
    """Field-induced splitting of the spin-conserving and cross-spin transition pairs, MHz."""
    conserving: Union[float, np.ndarray]
    nonconserving: Union[float, np.ndarray]


def transition_splitting(
    g_e: float,
    g_h: float,
    b_gauss: ArrayLike,
    mu_b_mhz_per_gauss: float = MU_B_MHZ_PER_GAUSS,
) -> TransitionSplitting:
    """(g_h - g_e) mu_B B and (g_h + g_e) mu_B B for b_gauss >= 0."""
    b = np.asarray(b_gauss, dtype=float)
    if np.any(b < 0):
        raise ValidationError("b_gauss must be >= 0")
    conserving = (g_h - g_e) * mu_b_mhz_per_gauss * b
    nonconserving = (g_h + g_e) * mu_b_mhz_per_gauss * b
    if b.ndim == 0:
        return TransitionSplitting(float(conserving), float(nonconserving))
    return TransitionSplitting(conserving, nonconserving)


@dataclass(frozen=True)
class HyperpolModel:
    """Homogeneous width, g-factors and branch ratio of a T-centre ensemble."""
    gamma: float
    holes: HoleGFactors
    g_e: float = DEFAULT_G_E
    branch_ratio_r: float = 0.0
    inhom: Optional[LineshapeSpec] = None
    weights: Optional[np.ndarray] = None
    mu_b_mhz_per_gauss: float = MU_B_MHZ_PER_GAUSS

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError(f"gamma must be positive, got {self.gamma}")
        if not self.branch_ratio_r >= 0:
            raise ValidationError(f"branch_ratio_r must be >= 0, got {self.branch_ratio_r}")

        if self.weights is None:
            weights = self.holes.weights()
        else:
            weights = np.asarray(self.weights, dtype=float)
            if weights.shape != (len(self.holes.entries),):
                raise ValidationError("one weight per g-factor entry is required")
            if np.any(weights < 0):
                raise ValidationError("weights must be non-negative")
            if abs(weights.sum() - 1.0) > 1e-9:
                raise ValidationError(f"weights must sum to 1, got {weights.sum()}")
        weights = np.array(weights, dtype=float)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def single_subset(cls, gamma: float, g_h: float, **kwargs) -> "HyperpolModel":
        """Model in which every centre has the same hole g-factor."""
        return cls(gamma=gamma, holes=HoleGFactors.uniform(g_h), **kwargs)

    def with_gamma(self, gamma: float) -> "HyperpolModel":
        return replace(self, gamma=gamma)

    def conserving_splittings(self, b_gauss: ArrayLike) -> np.ndarray:
        """(g_h - g_e) mu_B B per entry; the entry axis is last."""
        b = np.asarray(b_gauss, dtype=float)[..., np.newaxis]
        return (self.holes.values - self.g_e) * self.mu_b_mhz_per_gauss * b

    def mean_abs_splitting(self, b_gauss: ArrayLike) -> np.ndarray:
        """Weighted mean of |(g_h - g_e) mu_B B| over the subsets."""
        return np.abs(self.conserving_splittings(b_gauss)) @ self.weights


def _peak_lorentzian(x: np.ndarray, gamma: float) -> np.ndarray:
    return gamma ** 2 / (gamma ** 2 + 4.0 * np.square(x))


def _four_transition(
    gamma: float,
    g_e: float,
    g_h: float,
    r: float,
    b_gauss: np.ndarray,
    delta_mhz: np.ndarray,
    mu_b: float,
) -> np.ndarray:
    conserving = (g_h - g_e) * mu_b * b_gauss
    crossing = (g_h + g_e) * mu_b * b_gauss
    l_b = _peak_lorentzian(delta_mhz + conserving / 2.0, gamma)
    l_c = _peak_lorentzian(delta_mhz - conserving / 2.0, gamma)
    l_a = r * _peak_lorentzian(delta_mhz - crossing / 2.0, gamma)
    l_d = r * _peak_lorentzian(delta_mhz + crossing / 2.0, gamma)

    numerator = (l_a + l_b) * (l_c + l_d)
    denominator = l_a + l_b + l_c + l_d
    with np.errstate(invalid="ignore", divide="ignore"):
        amplitude = np.where(denominator > 0, numerator / denominator, 0.0)
    # value of the same expression at zero field and detuning
    return amplitude / ((1.0 + r) / 2.0)


def _single_subset(model: HyperpolModel) -> float:
    if len(model.holes.entries) != 1:
        raise ValidationError(
            f"a single-subset model is required, got {len(model.holes.entries)} g-factor entries"
        )
    return model.holes.entries[0].g_h


def _squeeze(value: np.ndarray, *inputs: ArrayLike) -> Union[float, np.ndarray]:
    if all(np.ndim(item) == 0 for item in inputs):
        return float(value)
    return value


def rate_model_amplitude(model: HyperpolModel, b_gauss: ArrayLike, delta_mhz: ArrayLike):
    """
    Two-transition rate-model amplitude L_B L_C / (L_B + L_C), normalized.

    L_B and L_C are peak-normalized Lorentzians of FWHM gamma centred at
    -/+ half the spin-conserving splitting.
    """
    g_h = _single_subset(model)
    if model.branch_ratio_r != 0:
        raise ValidationError("the two-transition rate model requires branch_ratio_r = 0")
    b = np.asarray(b_gauss, dtype=float)
    delta = np.asarray(delta_mhz, dtype=float)
    value = _four_transition(model.gamma, model.g_e, g_h, 0.0, b, delta,
                             model.mu_b_mhz_per_gauss)
    return _squeeze(value, b_gauss, delta_mhz)


def single_centre_amplitude(gamma: float, eps_b: ArrayLike, delta_mhz: ArrayLike):
    """Closed form Gamma^2 / (4 Delta^2 + Gamma^2 + eps_B^2)."""
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    eps = np.asarray(eps_b, dtype=float)
    delta = np.asarray(delta_mhz, dtype=float)
    value = gamma ** 2 / (4.0 * delta ** 2 + gamma ** 2 + eps ** 2)
    return _squeeze(value, eps_b, delta_mhz)


def four_transition_amplitude(model: HyperpolModel, b_gauss: ArrayLike, delta_mhz: ArrayLike):
    """
    Amplitude including the cross-spin transitions A and D:
    (L_B L_C + L_A L_C + L_B L_D + L_A L_D) / (L_A + L_B + L_C + L_D), normalized.

    L_A and L_D have peak r and sit at +/- half the cross-spin splitting.
    """
    g_h = _single_subset(model)
    b = np.asarray(b_gauss, dtype=float)
    delta = np.asarray(delta_mhz, dtype=float)
    value = _four_transition(model.gamma, model.g_e, g_h, model.branch_ratio_r, b, delta,
                             model.mu_b_mhz_per_gauss)
    return _squeeze(value, b_gauss, delta_mhz)


def ensemble_amplitude(model: HyperpolModel, b_gauss: ArrayLike, delta_mhz: ArrayLike):
    """Weighted average of the per-subset amplitude over the orientational subsets."""
    b = np.asarray(b_gauss, dtype=float)
    delta = np.asarray(delta_mhz, dtype=float)
    total = np.zeros(np.broadcast(b, delta).shape)
    for entry, weight in zip(model.holes.entries, model.weights):
        if weight == 0:
            continue
        if model.branch_ratio_r == 0:
            eps = (entry.g_h - model.g_e) * model.mu_b_mhz_per_gauss * b
            total = total + weight * single_centre_amplitude(model.gamma, eps, delta)
        else:
            total = total + weight * _four_transition(
                model.gamma, model.g_e, entry.g_h, model.branch_ratio_r, b, delta,
                model.mu_b_mhz_per_gauss,
            )
    return _squeeze(total, b_gauss, delta_mhz)


def quadrature_points(gamma: float, inhom_fwhm: float) -> int:
    """Odd trapezoid point count resolving the homogeneous width over +/-5 inhomogeneous widths."""
    span = 2.0 * QUADRATURE_HALF_SPAN * inhom_fwhm
    n = int(np.ceil(QUADRATURE_POINTS_PER_WIDTH * span / gamma)) + 1
    n = max(QUADRATURE_MIN_POINTS, n)
    if n > QUADRATURE_MAX_POINTS:
        logger.warning(
            f"Convolution grid capped at {QUADRATURE_MAX_POINTS} points "
            f"(inhomogeneous/homogeneous ratio {inhom_fwhm / gamma:.3g})"
        )
        n = QUADRATURE_MAX_POINTS
    return n if n % 2 else n + 1


def _convolve(model: HyperpolModel, b: np.ndarray, delta: np.ndarray, n_points: int) -> np.ndarray:
    homogeneous = replace(model, inhom=None)
    half_span = QUADRATURE_HALF_SPAN * model.inhom.fwhm
    grid = np.linspace(-half_span, half_span, n_points)
    density = profile(model.inhom, grid)

    reference = trapezoid(ensemble_amplitude(homogeneous, 0.0, grid) * density, grid)

    b_flat, delta_flat = (arr.ravel() for arr in np.broadcast_arrays(b, delta))
    result = np.empty(b_flat.shape)
    rows_per_block = max(1, 2_000_000 // n_points)
    for start in range(0, len(b_flat), rows_per_block):
        stop = start + rows_per_block
        shifted = delta_flat[start:stop, np.newaxis] + grid[np.newaxis, :]
        values = ensemble_amplitude(homogeneous, b_flat[start:stop, np.newaxis], shifted)
        result[start:stop] = trapezoid(values * density, grid, axis=1)
    return (result / reference).reshape(np.broadcast(b, delta).shape)


def convolved_amplitude(
    model: HyperpolModel,
    b_gauss: ArrayLike,
    delta_mhz: ArrayLike = 0.0,
    n_points: Optional[int] = None,
    check_convergence: bool = True,
):
    """
    Ensemble amplitude with Delta -> Delta + dE averaged over the inhomogeneous
    distribution of dE, renormalized to 1 at zero field and detuning.

    Args:
        model: Model with ``inhom`` set
        b_gauss: Field(s) in gauss
        delta_mhz: Laser detuning(s) in MHz
        n_points: Trapezoid points on +/-5 inhomogeneous widths; chosen from
            the width ratio when omitted
        check_convergence: Repeat with twice the points and compare

    Raises:
        NumericalError: If doubling the points changes the result by more than 1e-4
    """
    if model.inhom is None:
        raise ValidationError("convolved_amplitude requires an inhomogeneous lineshape")
    if n_points is None:
        n_points = quadrature_points(model.gamma, model.inhom.fwhm)
    if n_points < 3:
        raise ValidationError("n_points must be at least 3")

    b = np.asarray(b_gauss, dtype=float)
    delta = np.asarray(delta_mhz, dtype=float)
    value = _convolve(model, b, delta, n_points)

    if check_convergence:
        refined = _convolve(model, b, delta, 2 * n_points - 1)
        change = float(np.max(np.abs(refined - value)))
        if change > QUADRATURE_TOL:
            raise NumericalError(
                f"convolution quadrature not converged: doubling {n_points} points "
                f"changed the result by {change:.3g}"
            )
    return _squeeze(value, b_gauss, delta_mhz)


class ResidualFieldMode(str, Enum):
    ENSEMBLE_EQ2 = "ensemble_eq2"
    GLP_WIDTH = "glp_width"


def residual_field_counts(
    model: HyperpolModel,
    b_gauss: float,
    delta_mhz: ArrayLike,
    mode: ResidualFieldMode,
) -> np.ndarray:
    """
    Spectrum shape at a small residual field.

    The optical linewidth is ``model.inhom.fwhm`` when set, else ``model.gamma``.
    ``ensemble_eq2`` averages the single-centre lineshape over the subsets
    with gamma set to that linewidth; ``glp_width`` returns a peak-normalized
    Gauss-Lorentz product of width sqrt(linewidth^2 + eps^2), eps being the
    subset-mean spin-conserving splitting.
    """
    mode = ResidualFieldMode(mode)
    linewidth = model.inhom.fwhm if model.inhom is not None else model.gamma
    delta = np.asarray(delta_mhz, dtype=float)

    if mode is ResidualFieldMode.ENSEMBLE_EQ2:
        optical = replace(model, gamma=linewidth, inhom=None)
        return np.asarray(ensemble_amplitude(optical, b_gauss, delta), dtype=float)

    eps = float(model.mean_abs_splitting(b_gauss))
    spec = LineshapeSpec(LineshapeKind.GLP, float(np.hypot(linewidth, eps)))
    return profile(spec, delta) / profile(spec, 0.0)


def residual_field_spectrum(
    model: HyperpolModel,
    b_gauss: float,
    delta_mhz: Sequence[float],
    mode: ResidualFieldMode,
) -> SpectrumData:
    """Residual-field PLE spectrum on a detuning grid, see residual_field_counts."""
    counts = residual_field_counts(model, b_gauss, delta_mhz, mode)
    return SpectrumData(delta_mhz=np.asarray(delta_mhz, dtype=float), counts=counts)
