"""Synthetic datasets, map linecut analysis and derived figures of merit."""

import logging
from typing import Optional, Sequence

import numpy as np

from tcentre_hyperpol.analyzers.fitkit import fit_linewidth_spectrum
from tcentre_hyperpol.core.contracts import (
    Indistinguishability,
    LinewidthRow,
    LinewidthTable,
    PLEMap,
    SpectrumData,
    SweepData,
)
from tcentre_hyperpol.core.exceptions import HyperpolError, ValidationError
from tcentre_hyperpol.core.lineshape import (
    HyperpolModel,
    convolved_amplitude,
    ensemble_amplitude,
)

logger = logging.getLogger(__name__)

DEBYE_WALLER_XI = 0.23
GAMMA1_MHZ = 0.169

# Thermal contributions to the homogeneous linewidth, MHz
THERMAL_BROADENING_MHZ = {
    4.2: 230.0,
    1.4: 0.033,
}


def simulate_sweep(
    model: HyperpolModel,
    b_gauss: Sequence[float],
    noise_sigma: float = 0.0,
    seed: int = 0,
    delta_mhz: float = 0.0,
) -> SweepData:
    """
    Zero-detuning amplitude versus field with additive Gaussian noise.

    The convolved amplitude is used when the model carries an inhomogeneous
    lineshape. The sigma column holds noise_sigma, or 1 when noise_sigma is 0.
    """
    if noise_sigma < 0:
        raise ValidationError(f"noise_sigma must be >= 0, got {noise_sigma}")
    b = np.asarray(b_gauss, dtype=float)

    if model.inhom is not None:
        clean = np.asarray(convolved_amplitude(model, b, delta_mhz), dtype=float)
    else:
        clean = np.asarray(ensemble_amplitude(model, b, delta_mhz), dtype=float)

    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma, size=b.shape) if noise_sigma > 0 else np.zeros_like(b)
    sigma = np.full_like(b, noise_sigma if noise_sigma > 0 else 1.0)
    logger.debug(f"Simulated sweep of {len(b)} points (noise {noise_sigma}, seed {seed})")
    return SweepData(b_gauss=b, amplitude=clean + noise, sigma=sigma)


def simulate_map(
    model: HyperpolModel,
    b_gauss: Sequence[float],
    delta_mhz: Sequence[float],
) -> PLEMap:
    """Ensemble amplitude on the full (field, detuning) grid."""
    b = np.asarray(b_gauss, dtype=float)
    delta = np.asarray(delta_mhz, dtype=float)
    if b.size == 0 or delta.size == 0:
        raise ValidationError("map grids must be non-empty")
    amplitude = ensemble_amplitude(model, b[:, np.newaxis], delta[np.newaxis, :])
    return PLEMap(b_gauss=b, delta_mhz=delta, amplitude=amplitude)


def map_linewidths(ple_map: PLEMap, max_iter: int = 500) -> LinewidthTable:
    """
    Lorentzian FWHM of every fixed-field row.

    Rows whose fit fails or does not converge are listed in ``flagged`` and
    left out of ``rows``.
    """
    if len(ple_map.delta_mhz) < SpectrumData.MIN_POINTS:
        raise ValidationError(
            f"each row needs at least {SpectrumData.MIN_POINTS} points, "
            f"got {len(ple_map.delta_mhz)}"
        )

    rows = []
    flagged = []
    for b, counts in zip(ple_map.b_gauss, ple_map.amplitude):
        try:
            fit = fit_linewidth_spectrum(
                SpectrumData(ple_map.delta_mhz, counts),
                fit_offset=False,
                max_iter=max_iter,
            )
        except HyperpolError as exc:
            logger.warning(f"Row at {b:g} G not fitted: {exc}")
            flagged.append(float(b))
            continue
        if not fit.converged:
            logger.warning(f"Row at {b:g} G did not converge: {fit.message}")
            flagged.append(float(b))
            continue
        rows.append(LinewidthRow(float(b), fit.params["lambda_mhz"], fit.sigmas["lambda_mhz"]))

    logger.info(f"Fitted {len(rows)} of {len(ple_map.b_gauss)} map rows")
    return LinewidthTable(rows=rows, flagged=flagged)


def indistinguishability(
    gamma_sd_mhz: float,
    xi: float = DEBYE_WALLER_XI,
    gamma1_mhz: float = GAMMA1_MHZ,
) -> Indistinguishability:
    """I = xi * Gamma_1 / (xi * Gamma_1 + Gamma_sd)."""
    if gamma_sd_mhz < 0:
        raise ValidationError(f"gamma_sd_mhz must be >= 0, got {gamma_sd_mhz}")
    if not xi > 0 or not gamma1_mhz > 0:
        raise ValidationError("xi and gamma1_mhz must be positive")
    coherent = xi * gamma1_mhz
    return Indistinguishability(
        xi=xi,
        gamma1_mhz=gamma1_mhz,
        gamma_sd_mhz=gamma_sd_mhz,
        value=coherent / (coherent + gamma_sd_mhz),
    )


def thermal_broadening_mhz(temperature_k: float) -> float:
    """Tabulated thermal linewidth contribution; only measured temperatures are known."""
    for known, value in THERMAL_BROADENING_MHZ.items():
        if abs(temperature_k - known) < 1e-6:
            return value
    raise ValidationError(
        f"no thermal broadening known at {temperature_k} K "
        f"(available: {sorted(THERMAL_BROADENING_MHZ)})"
    )


def spectral_diffusion_width(gamma_mhz: float, temperature_k: Optional[float] = None) -> float:
    """Homogeneous width with the tabulated thermal contribution removed."""
    if temperature_k is None:
        return gamma_mhz
    remainder = gamma_mhz - thermal_broadening_mhz(temperature_k)
    if remainder < 0:
        raise ValidationError(
            f"fitted width {gamma_mhz:.4g} MHz is below the thermal contribution at {temperature_k} K"
        )
    return remainder
