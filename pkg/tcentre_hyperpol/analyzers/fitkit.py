"""Fit drivers: spectrum linewidths, spectral-diffusion widths, g-factor calibration."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from tcentre_hyperpol.analyzers.least_squares import least_squares
from tcentre_hyperpol.core.contracts import (
    N_ORIENTATIONS,
    FitResult,
    HoleGFactors,
    OrientationMap,
    SpectrumData,
    SweepData,
)
from tcentre_hyperpol.core.exceptions import NumericalError, ValidationError
from tcentre_hyperpol.core.lineshape import (
    DEFAULT_G_E,
    HyperpolModel,
    LineshapeKind,
    LineshapeSpec,
    ResidualFieldMode,
    convolved_amplitude,
    ensemble_amplitude,
    profile,
    quadrature_points,
    residual_field_counts,
)
from tcentre_hyperpol.core.spinham import (
    MU_B_MHZ_PER_GAUSS,
    FieldSpec,
    HoleModel,
    OrientationSet,
    StrainConfig,
    enumerate_orientations,
    orientation_g_values,
)

logger = logging.getLogger(__name__)

HolesBuilder = Callable[[float, float], HoleGFactors]


class SweepMode(str, Enum):
    HOMOGENEOUS = "homogeneous"
    CONVOLVED = "convolved"


class WeightMode(str, Enum):
    EQUAL = "equal"
    SINGLE_MIN = "single_min"
    SINGLE_MAX = "single_max"


@dataclass
class FitOptions:
    """Bounds and thresholds shared by the sweep fit drivers."""
    gamma_bounds_mhz: Tuple[float, float] = (1e-3, 1e6)
    max_iter: int = 500
    mask_chi2: float = 10.0
    fit_offset: bool = False


# spectrum linewidth fits

def locate_fwhm(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float, float]:
    """
    Numerically locate the half-maximum crossings around the highest point.

    Returns:
        (fwhm, centre, amplitude above baseline, baseline); crossings that fall
        outside the data are replaced by the data edge
    """
    baseline = float(np.min(y))
    peak_index = int(np.argmax(y))
    amplitude = float(y[peak_index]) - baseline
    if amplitude <= 0:
        raise ValidationError("spectrum has no peak above its baseline")
    half = baseline + amplitude / 2.0

    def crossing(step: int) -> float:
        inner = peak_index
        outer = peak_index + step
        while 0 <= outer < len(x):
            if y[outer] < half:
                fraction = (y[inner] - half) / (y[inner] - y[outer])
                return float(x[inner] + fraction * (x[outer] - x[inner]))
            inner, outer = outer, outer + step
        return float(x[inner])

    return crossing(1) - crossing(-1), float(x[peak_index]), amplitude, baseline


def _spectrum_shape(
    kind: LineshapeKind,
    residual_b_gauss: float,
    holes: Optional[HoleGFactors],
    g_e: float,
) -> Callable[[np.ndarray, float], np.ndarray]:
    """Peak-normalized line shape as a function of (detuning, linewidth)."""
    if residual_b_gauss == 0 or holes is None:
        def shape(delta, width):
            spec = LineshapeSpec(kind, width)
            return profile(spec, delta) / profile(spec, 0.0)
        return shape

    if kind is LineshapeKind.GAUSSIAN:
        raise ValidationError("residual-field correction is defined for lorentzian and glp shapes")
    mode = ResidualFieldMode.ENSEMBLE_EQ2 if kind is LineshapeKind.LORENTZIAN \
        else ResidualFieldMode.GLP_WIDTH

    def residual_shape(delta, width):
        inhom = LineshapeSpec(LineshapeKind.GLP, width) if mode is ResidualFieldMode.GLP_WIDTH else None
        model = HyperpolModel(gamma=width, holes=holes, g_e=g_e, inhom=inhom)
        return residual_field_counts(model, residual_b_gauss, delta, mode)
    return residual_shape


def fit_linewidth_spectrum(
    spectrum: SpectrumData,
    kind: LineshapeKind = LineshapeKind.LORENTZIAN,
    residual_b_gauss: float = 0.0,
    holes: Optional[HoleGFactors] = None,
    g_e: float = DEFAULT_G_E,
    fit_offset: bool = True,
    max_iter: int = 500,
) -> FitResult:
    """
    Fit linewidth, centre, amplitude and offset of a PLE spectrum.

    At a non-zero residual field the model is the residual-field spectrum:
    the subset-averaged single-centre line for a Lorentzian fit, or a GLP of
    width sqrt(linewidth^2 + eps^2) for a GLP fit.

    Args:
        spectrum: Counts versus detuning
        kind: Line shape fitted to the data
        residual_b_gauss: Residual field during the scan, gauss
        holes: Hole g-factors, required for the residual-field correction
        g_e: Electron g-factor
        fit_offset: Fit a constant baseline; held at 0 otherwise
        max_iter: Iteration cap

    Returns:
        FitResult with parameters lambda_mhz, centre_mhz, amplitude, offset
    """
    kind = LineshapeKind(kind)
    if residual_b_gauss < 0:
        raise ValidationError("residual_b_gauss must be >= 0")

    delta = spectrum.delta_mhz
    counts = spectrum.counts
    width0, centre0, amplitude0, baseline0 = locate_fwhm(delta, counts)
    span = float(delta[-1] - delta[0])
    if width0 <= 0 or span <= 2.0 * width0:
        raise ValidationError(
            f"spectrum span {span:.4g} MHz must exceed twice the estimated width {width0:.4g} MHz"
        )

    shape = _spectrum_shape(kind, residual_b_gauss, holes, g_e)
    if residual_b_gauss > 0 and holes is not None:
        eps = float(np.abs((holes.values - g_e) * MU_B_MHZ_PER_GAUSS * residual_b_gauss)
                    @ holes.weights())
        width0 = float(np.sqrt(max(width0 ** 2 - eps ** 2, (width0 / 2.0) ** 2)))
    if not fit_offset:
        amplitude0, baseline0 = float(np.max(counts)), 0.0

    def model(x, width, centre, amplitude, offset):
        return offset + amplitude * shape(x - centre, width)

    logger.info(f"Fitting {kind.value} linewidth to {len(spectrum)} points (start {width0:.4g} MHz)")
    result = least_squares(
        model,
        p0=[width0, centre0, amplitude0, baseline0],
        xdata=delta,
        ydata=counts,
        sigma=spectrum.sigma,
        bounds=[
            (width0 * 1e-3, 100.0 * span),
            (float(delta[0]), float(delta[-1])),
            (0.0, np.inf),
            (-np.inf, np.inf),
        ],
        names=["lambda_mhz", "centre_mhz", "amplitude", "offset"],
        fixed=None if fit_offset else ["offset"],
        max_iter=max_iter,
    )
    result.extras.update({"kind": kind.value, "residual_b_gauss": residual_b_gauss})
    logger.info(
        f"Linewidth {result.params['lambda_mhz']:.4g} +/- {result.sigmas['lambda_mhz']:.2g} MHz"
    )
    return result


# spectral-diffusion fits

def _sweep_model(
    holes: HoleGFactors,
    g_e: float,
    mode: SweepMode,
    inhom: Optional[LineshapeSpec],
    branch_ratio_r: float,
    n_points: Optional[int],
) -> Callable:
    def model(b, gamma, scale, offset):
        hyperpol = HyperpolModel(gamma=gamma, holes=holes, g_e=g_e,
                                 branch_ratio_r=branch_ratio_r, inhom=inhom)
        if mode is SweepMode.CONVOLVED:
            values = convolved_amplitude(hyperpol, b, 0.0, n_points=n_points,
                                         check_convergence=False)
        else:
            values = ensemble_amplitude(hyperpol, b, 0.0)
        return offset + scale * np.asarray(values)
    return model


def initial_gamma(
    sweep: SweepData,
    holes: HoleGFactors,
    g_e: float,
    mode: SweepMode,
) -> Tuple[float, float]:
    """
    Starting (gamma, scale) from the field where the amplitude halves.

    A single centre halves where eps_B = gamma; after a broad inhomogeneous
    convolution it halves where eps_B = sqrt(3) gamma. eps_B uses the
    multiplicity-weighted mean |g_h - g_e|.
    """
    order = np.argsort(np.abs(sweep.b_gauss))
    fields = np.abs(sweep.b_gauss[order])
    values = sweep.amplitude[order]
    scale = float(values[0]) if values[0] > 0 else float(np.max(np.abs(values)))
    normalized = values / scale

    if np.min(normalized) > 0.8:
        logger.warning("Sweep amplitude never drops below 0.8 of its initial value; "
                       "the fitted width is poorly constrained")

    below = np.nonzero(normalized < 0.5)[0]
    if len(below):
        i = below[0]
        if i == 0:
            b_half = fields[0]
        else:
            b_half = float(np.interp(0.5, [normalized[i], normalized[i - 1]],
                                     [fields[i], fields[i - 1]]))
    else:
        b_half = 2.0 * float(fields[-1])

    mean_dg = float(np.abs(holes.values - g_e) @ holes.weights())
    eps_half = max(mean_dg * MU_B_MHZ_PER_GAUSS * b_half, 1e-3)
    gamma = eps_half if mode is SweepMode.HOMOGENEOUS else eps_half / np.sqrt(3.0)
    return float(gamma), scale


def _fit_gamma_single(
    sweep: SweepData,
    holes: HoleGFactors,
    g_e: float,
    mode: SweepMode,
    inhom: Optional[LineshapeSpec],
    branch_ratio_r: float,
    options: FitOptions,
) -> FitResult:
    gamma0, scale0 = initial_gamma(sweep, holes, g_e, mode)
    low, high = options.gamma_bounds_mhz
    gamma0 = float(np.clip(gamma0, low, high))

    n_points = None
    if mode is SweepMode.CONVOLVED:
        # fixed for the whole fit so the cost surface does not jump between iterations
        n_points = quadrature_points(gamma0 / 2.0, inhom.fwhm)

    model = _sweep_model(holes, g_e, mode, inhom, branch_ratio_r, n_points)
    result = least_squares(
        model,
        p0=[gamma0, scale0, 0.0],
        xdata=sweep.b_gauss,
        ydata=sweep.amplitude,
        sigma=sweep.sigma,
        bounds=[(low, high), (0.0, np.inf), (-np.inf, np.inf)],
        names=["gamma_mhz", "scale", "offset"],
        fixed=None if options.fit_offset else ["offset"],
        max_iter=options.max_iter,
    )
    if "gamma_mhz" in result.at_bounds:
        logger.warning(f"Fitted gamma {result.params['gamma_mhz']:.4g} MHz sits at a bound")
    result.extras.update({"gamma_start_mhz": gamma0, "quadrature_points": n_points})
    return result


def fit_gamma_sd(
    sweep: SweepData,
    holes: HoleGFactors,
    g_e: float = DEFAULT_G_E,
    mode: SweepMode = SweepMode.HOMOGENEOUS,
    inhom: Optional[LineshapeSpec] = None,
    weight_mode: WeightMode = WeightMode.EQUAL,
    branch_ratio_r: float = 0.0,
    options: Optional[FitOptions] = None,
) -> FitResult:
    """
    Fit the homogeneous width of a hyperpolarization sweep taken at zero detuning.

    The model is scale * A(B; gamma) + offset, A being the ensemble amplitude
    (homogeneous mode) or its convolution with ``inhom`` (convolved mode).
    ``single_min`` and ``single_max`` fit each distinct g-factor subset on
    its own and keep the smallest or largest width, which brackets the
    equal-weight result.

    Returns:
        FitResult with parameters gamma_mhz, scale, offset
    """
    mode = SweepMode(mode)
    weight_mode = WeightMode(weight_mode)
    options = options or FitOptions()
    if mode is SweepMode.CONVOLVED and inhom is None:
        raise ValidationError("convolved mode requires an inhomogeneous lineshape")
    if mode is SweepMode.HOMOGENEOUS:
        inhom = None

    logger.info(f"Fitting {mode.value} sweep of {len(sweep)} points ({weight_mode.value} weights)")
    if weight_mode is WeightMode.EQUAL:
        result = _fit_gamma_single(sweep, holes, g_e, mode, inhom, branch_ratio_r, options)
        result.extras["weight_mode"] = weight_mode.value
        logger.info(f"Gamma {result.params['gamma_mhz']:.4g} +/- "
                    f"{result.sigmas['gamma_mhz']:.2g} MHz")
        return result

    per_subset: Dict[float, FitResult] = {}
    for entry in holes.entries:
        if entry.g_h in per_subset:
            continue
        per_subset[entry.g_h] = _fit_gamma_single(
            sweep, HoleGFactors.uniform(entry.g_h), g_e, mode, inhom, branch_ratio_r, options
        )

    pick = min if weight_mode is WeightMode.SINGLE_MIN else max
    g_h = pick(per_subset, key=lambda g: per_subset[g].params["gamma_mhz"])
    result = per_subset[g_h]
    result.extras.update({
        "weight_mode": weight_mode.value,
        "g_h": g_h,
        "subset_gamma_mhz": {str(g): fit.params["gamma_mhz"] for g, fit in per_subset.items()},
    })
    logger.info(f"Bounding subset g_h={g_h:.4g}: gamma {result.params['gamma_mhz']:.4g} MHz")
    return result


@dataclass(frozen=True)
class BranchScanRow:
    """Fitted width at one cross-spin fraction s = L_AD / (L_AD + L_BC)."""
    fraction: float
    branch_ratio_r: float
    gamma_mhz: float
    sigma_mhz: float
    converged: bool


def branch_fraction_scan(
    sweep: SweepData,
    holes: HoleGFactors,
    fractions: Sequence[float],
    g_e: float = DEFAULT_G_E,
    mode: SweepMode = SweepMode.HOMOGENEOUS,
    inhom: Optional[LineshapeSpec] = None,
    options: Optional[FitOptions] = None,
) -> List[BranchScanRow]:
    """Refit gamma with the cross-spin peaks set to s and the conserving peaks to 1 - s."""
    rows = []
    for s in fractions:
        if not 0.0 <= s < 1.0:
            raise ValidationError(f"fractions must lie in [0, 1), got {s}")
        r = s / (1.0 - s)
        fit = fit_gamma_sd(sweep, holes, g_e, mode, inhom, WeightMode.EQUAL, r, options)
        rows.append(BranchScanRow(
            fraction=float(s),
            branch_ratio_r=float(r),
            gamma_mhz=fit.params["gamma_mhz"],
            sigma_mhz=fit.sigmas["gamma_mhz"],
            converged=fit.converged,
        ))
        logger.debug(f"s={s:.3g}: gamma {fit.params['gamma_mhz']:.4g} MHz")
    return rows


def half_decay_field(model: HyperpolModel, b_start: float = 1.0, max_doublings: int = 60) -> float:
    """
    Field (gauss) at which the zero-detuning amplitude falls to 1/2.

    The convolved amplitude is used when the model has an inhomogeneous
    lineshape, the plain ensemble amplitude otherwise.
    """
    n_points = None
    if model.inhom is not None:
        n_points = quadrature_points(model.gamma, model.inhom.fwhm)

    def amplitude(b: float) -> float:
        if model.inhom is not None:
            return float(convolved_amplitude(model, b, 0.0, n_points=n_points,
                                             check_convergence=False))
        return float(ensemble_amplitude(model, b, 0.0))

    high = b_start
    for _ in range(max_doublings):
        if amplitude(high) < 0.5:
            return float(brentq(lambda b: amplitude(b) - 0.5, 0.0, high, xtol=1e-9 * high))
        high *= 2.0
    raise NumericalError(f"amplitude stays above 1/2 up to {high:.3g} G")


# g-factor calibration

CALIBRATION_NAMES = ["g1", "g2", "incl_deg", "azim_deg"]
CALIBRATION_BOUNDS = [(1.0, 2.0), (-0.5, 0.1), (0.0, 30.0), (-np.inf, np.inf)]
AZIMUTH_SEEDS_DEG = tuple(45.0 * k for k in range(8))
PRESCAN_G1 = (1.3, 1.4, 1.5, 1.6)
PRESCAN_INCL_DEG = tuple(np.arange(2.5, 30.01, 2.5))
START_G2 = -0.1


class GFactorCalibration:
    """Sorted model g-factors as a function of (g1, g2, inclination, azimuth)."""

    def __init__(
        self,
        strain: StrainConfig,
        nominal_axis: Sequence[float],
        orientations: Optional[OrientationSet] = None,
    ):
        self.strain = strain
        self.nominal_axis = tuple(float(a) for a in nominal_axis)
        self.orientations = orientations or enumerate_orientations(strain)

    def g_values(self, g1: float, g2: float, incl_deg: float, azim_deg: float) -> np.ndarray:
        """All twelve g_h, sorted descending."""
        model = HoleModel(self.strain, g1=g1, g2=g2)
        field = FieldSpec.from_angles(1.0, np.radians(incl_deg), np.radians(azim_deg),
                                      axis=self.nominal_axis)
        return np.sort(orientation_g_values(model, self.orientations, field))[::-1]

    def __call__(self, index, g1, g2, incl_deg, azim_deg) -> np.ndarray:
        return self.g_values(g1, g2, incl_deg, azim_deg)[index]

    def fold_azimuth(self, params: Dict[str, float], rtol: float = 1e-7) -> float:
        """Smallest azimuth in [0, 360) among {phi, -phi, 180 + phi, 180 - phi} giving the same g-set."""
        phi = params["azim_deg"] % 360.0
        reference = self.g_values(params["g1"], params["g2"], params["incl_deg"], phi)
        best = phi
        for candidate in (-phi, 180.0 + phi, 180.0 - phi):
            candidate %= 360.0
            values = self.g_values(params["g1"], params["g2"], params["incl_deg"], candidate)
            if np.allclose(values, reference, rtol=rtol, atol=0) and candidate < best:
                best = candidate
        return best


def _chi2(values: np.ndarray, measured: np.ndarray, sigma: np.ndarray) -> float:
    return float(np.sum(((values - measured) / sigma) ** 2))


def fit_gfactor_calibration(
    measured: Sequence[float],
    sigma: Sequence[float],
    strain: Optional[StrainConfig] = None,
    nominal_axis: Sequence[float] = (1.0, 1.0, 0.0),
    max_iter: int = 500,
) -> FitResult:
    """
    Fit g1, g2 and the field misalignment to twelve measured hole g-factors.

    Model and measured values are both sorted descending before pairing.
    Eight azimuth seeds are each started from the best point of a coarse
    (g1, inclination) scan; the lowest chi-square wins. The reported azimuth
    is reduced to its smallest symmetry-equivalent value.

    Returns:
        FitResult with parameters g1, g2, incl_deg, azim_deg
    """
    measured = np.asarray(measured, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if measured.shape != (N_ORIENTATIONS,) or sigma.shape != (N_ORIENTATIONS,):
        raise ValidationError(
            f"exactly {N_ORIENTATIONS} measured g-factors and uncertainties are required, "
            f"got {measured.size} and {sigma.size}"
        )
    if np.any(sigma <= 0):
        raise ValidationError("g-factor uncertainties must be positive")

    order = np.argsort(measured)[::-1]
    measured, sigma = measured[order], sigma[order]
    calibration = GFactorCalibration(strain or StrainConfig(), nominal_axis)
    index = np.arange(N_ORIENTATIONS)

    best: Optional[FitResult] = None
    best_chi2 = np.inf
    for azimuth in AZIMUTH_SEEDS_DEG:
        start = min(
            ((g1, START_G2, incl, azimuth) for g1 in PRESCAN_G1 for incl in PRESCAN_INCL_DEG),
            key=lambda p: _chi2(calibration.g_values(*p), measured, sigma),
        )
        result = least_squares(
            calibration, p0=start, xdata=index, ydata=measured, sigma=sigma,
            bounds=CALIBRATION_BOUNDS, names=CALIBRATION_NAMES, max_iter=max_iter,
        )
        chi2 = _chi2(calibration.g_values(*result.params.values()), measured, sigma)
        logger.debug(f"Azimuth seed {azimuth:.0f} deg: chi2={chi2:.4g}")
        if chi2 < best_chi2:
            best, best_chi2 = result, chi2

    best.params["azim_deg"] = calibration.fold_azimuth(best.params)
    best.extras.update({
        "chi2": best_chi2,
        "fitted_g": calibration.g_values(*best.params.values()).tolist(),
        "measured_g": measured.tolist(),
    })
    logger.info(
        f"Calibration g1={best.params['g1']:.4f} g2={best.params['g2']:.4f} "
        f"incl={best.params['incl_deg']:.2f} azim={best.params['azim_deg']:.2f} deg"
    )
    return best


# orientation bounding

def default_holes_builder(
    model: Optional[HoleModel] = None,
    orientations: Optional[OrientationSet] = None,
) -> HolesBuilder:
    """g-factor sets for a field at spherical angles (radians) about [001]."""
    model = model or HoleModel(StrainConfig())
    orientations = orientations or enumerate_orientations(model.strain)

    def build(theta: float, phi: float) -> HoleGFactors:
        field = FieldSpec.from_angles(1.0, theta, phi)
        return HoleGFactors.from_values(orientation_g_values(model, orientations, field))
    return build


def orientation_bound_sweep(
    sweep: SweepData,
    grid: Tuple[int, int] = (8, 8),
    holes_builder: Optional[HolesBuilder] = None,
    g_e: float = DEFAULT_G_E,
    mode: SweepMode = SweepMode.HOMOGENEOUS,
    inhom: Optional[LineshapeSpec] = None,
    options: Optional[FitOptions] = None,
    workers: int = 1,
) -> OrientationMap:
    """
    Fit the sweep for every field direction on a (theta, phi) grid over [0, pi/2]^2.

    Points whose fit did not converge or whose reduced chi-square exceeds
    ``options.mask_chi2`` are masked. Results do not depend on ``workers``.

    Raises:
        FitConvergenceError: If every grid point is masked
    """
    n_theta, n_phi = grid
    if n_theta < 1 or n_phi < 1:
        raise ValidationError(f"grid dimensions must be positive, got {grid}")
    if n_theta < 8 or n_phi < 8:
        logger.warning(f"Orientation grid {n_theta}x{n_phi} is coarser than 8x8")
    options = options or FitOptions()
    holes_builder = holes_builder or default_holes_builder()

    theta = np.linspace(0.0, np.pi / 2.0, n_theta)
    phi = np.linspace(0.0, np.pi / 2.0, n_phi)
    cells = [(i, j) for i in range(n_theta) for j in range(n_phi)]

    def fit_cell(cell: Tuple[int, int]) -> FitResult:
        i, j = cell
        holes = holes_builder(float(theta[i]), float(phi[j]))
        return fit_gamma_sd(sweep, holes, g_e, mode, inhom, WeightMode.EQUAL, 0.0, options)

    logger.info(f"Orientation sweep over {len(cells)} directions with {workers} worker(s)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit_cell, cells))
    else:
        results = [fit_cell(cell) for cell in cells]

    gamma = np.full((n_theta, n_phi), np.nan)
    chi2 = np.full((n_theta, n_phi), np.nan)
    converged = np.zeros((n_theta, n_phi), dtype=bool)
    for (i, j), result in zip(cells, results):
        chi2[i, j] = result.chi2_reduced
        ok = result.converged and result.chi2_reduced <= options.mask_chi2
        converged[i, j] = ok
        if ok:
            gamma[i, j] = result.params["gamma_mhz"]

    orientation_map = OrientationMap(theta=theta, phi=phi, gamma_sd_mhz=gamma,
                                     converged=converged, chi2_reduced=chi2)
    theta_max, phi_max, gamma_max = orientation_map.max_point
    logger.info(f"Maximum gamma {gamma_max:.4g} MHz at theta={theta_max / np.pi:.3f} pi, "
                f"phi={phi_max / np.pi:.3f} pi ({int(converged.sum())}/{converged.size} fitted)")
    return orientation_map
