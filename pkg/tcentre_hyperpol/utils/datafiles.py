"""CSV readers and writers for sweeps, spectra, maps and result tables."""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from tcentre_hyperpol.core.contracts import (
    HoleGFactors,
    LinewidthTable,
    OrientationMap,
    PLEMap,
    SpectrumData,
    SweepData,
)
from tcentre_hyperpol.core.exceptions import DataParseError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _read_columns(
    path: PathLike,
    required: Sequence[str],
    optional: Sequence[str] = (),
) -> Dict[str, np.ndarray]:
    """Read the named numeric columns; errors carry the 1-based file line."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False,
                            skipinitialspace=True, skip_blank_lines=False, encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataParseError(f"file not found: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataParseError("file is empty", line=1) from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataParseError(f"malformed CSV: {exc}") from exc

    frame.columns = [str(column).strip() for column in frame.columns]
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise DataParseError(f"missing column(s): {', '.join(missing)}", line=1)

    frame = frame.fillna("")
    filled = frame.apply(lambda column: column.str.strip() != "").any(axis=1)
    file_lines = frame.index[filled].to_numpy() + 2
    frame = frame[filled].reset_index(drop=True)

    columns = {}
    for name in list(required) + [c for c in optional if c in frame.columns]:
        raw = frame[name].str.strip()
        numeric = raw.map(_to_float).to_numpy(dtype=float)
        bad = np.nonzero(~np.isfinite(numeric))[0]
        if len(bad):
            row = int(bad[0])
            raise DataParseError(
                f"column {name}: {raw.iloc[row]!r} is not a finite number",
                line=int(file_lines[row]),
            )
        columns[name] = numeric
    return columns


def _sorted_by(columns: Dict[str, np.ndarray], axis: str) -> Dict[str, np.ndarray]:
    order = np.argsort(columns[axis], kind="stable")
    return {name: values[order] for name, values in columns.items()}


def parse_sweep_csv(path: PathLike) -> SweepData:
    """Columns b_gauss, amplitude and optionally sigma (default 1); rows sorted by field."""
    columns = _sorted_by(_read_columns(path, ["b_gauss", "amplitude"], ["sigma"]), "b_gauss")
    logger.debug(f"Read {len(columns['b_gauss'])} sweep rows from {path}")
    return SweepData(
        b_gauss=columns["b_gauss"],
        amplitude=columns["amplitude"],
        sigma=columns.get("sigma"),
    )


def parse_spectrum_csv(path: PathLike, delta_scale: float = 1.0) -> SpectrumData:
    """
    Columns delta_mhz, counts and optionally sigma (default 1); rows sorted by detuning.

    ``delta_scale`` multiplies the detuning column on ingest (1000 for GHz files).
    """
    columns = _sorted_by(_read_columns(path, ["delta_mhz", "counts"], ["sigma"]), "delta_mhz")
    sigma = columns.get("sigma")
    return SpectrumData(
        delta_mhz=columns["delta_mhz"] * delta_scale,
        counts=columns["counts"],
        sigma=sigma if sigma is not None else np.ones_like(columns["counts"]),
    )


def parse_map_csv(path: PathLike) -> PLEMap:
    """Long-format map with columns b_gauss, delta_mhz, amplitude covering a full grid."""
    columns = _read_columns(path, ["b_gauss", "delta_mhz", "amplitude"])
    frame = pd.DataFrame(columns)
    try:
        grid = frame.pivot(index="b_gauss", columns="delta_mhz", values="amplitude")
    except ValueError as exc:
        raise DataParseError(f"duplicate (b_gauss, delta_mhz) entries: {exc}") from exc
    if grid.isna().to_numpy().any():
        raise ValidationError("map rows do not cover a complete (b_gauss, delta_mhz) grid")
    grid = grid.sort_index().sort_index(axis=1)
    return PLEMap(
        b_gauss=grid.index.to_numpy(dtype=float),
        delta_mhz=grid.columns.to_numpy(dtype=float),
        amplitude=grid.to_numpy(dtype=float),
    )


def parse_gfactor_csv(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Columns g_h, sigma and optionally multiplicity; returns per-orientation values and sigmas."""
    columns = _read_columns(path, ["g_h", "sigma"], ["multiplicity"])
    if "multiplicity" in columns:
        counts = columns["multiplicity"]
        if np.any(counts < 1) or np.any(counts != np.round(counts)):
            raise ValidationError("multiplicity must hold positive integers")
        repeats = counts.astype(int)
        return np.repeat(columns["g_h"], repeats), np.repeat(columns["sigma"], repeats)
    return columns["g_h"], columns["sigma"]


def _write(frame: pd.DataFrame, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    logger.debug(f"Wrote {len(frame)} rows to {path}")


def write_sweep_csv(sweep: SweepData, path: PathLike) -> None:
    _write(pd.DataFrame({
        "b_gauss": sweep.b_gauss,
        "amplitude": sweep.amplitude,
        "sigma": sweep.sigma,
    }), path)


def write_spectrum_csv(spectrum: SpectrumData, path: PathLike) -> None:
    data = {"delta_mhz": spectrum.delta_mhz, "counts": spectrum.counts}
    if spectrum.sigma is not None:
        data["sigma"] = spectrum.sigma
    _write(pd.DataFrame(data), path)


def write_map_csv(ple_map: PLEMap, path: PathLike) -> None:
    n_b, n_delta = ple_map.amplitude.shape
    _write(pd.DataFrame({
        "b_gauss": np.repeat(ple_map.b_gauss, n_delta),
        "delta_mhz": np.tile(ple_map.delta_mhz, n_b),
        "amplitude": ple_map.amplitude.ravel(),
    }), path)


def write_gfactor_csv(holes: HoleGFactors, path: PathLike) -> None:
    _write(pd.DataFrame({
        "g_h": holes.values,
        "multiplicity": holes.multiplicities,
        "sigma": holes.sigmas,
    }), path)


def write_orientation_map_csv(orientation_map: OrientationMap, path: PathLike) -> None:
    """One row per grid point; masked points carry nan widths."""
    theta, phi = np.meshgrid(orientation_map.theta, orientation_map.phi, indexing="ij")
    _write(pd.DataFrame({
        "theta": theta.ravel(),
        "phi": phi.ravel(),
        "gamma_sd_mhz": orientation_map.gamma_sd_mhz.ravel(),
        "chi2_reduced": orientation_map.chi2_reduced.ravel(),
        "converged": orientation_map.converged.ravel(),
    }), path)


def write_linewidth_csv(table: LinewidthTable, path: PathLike) -> None:
    rows: List[Tuple[float, float, float]] = [
        (row.b_gauss, row.fwhm_mhz, row.sigma_mhz) for row in table.rows
    ]
    _write(pd.DataFrame(rows, columns=["b_gauss", "fwhm_mhz", "sigma_mhz"]), path)
