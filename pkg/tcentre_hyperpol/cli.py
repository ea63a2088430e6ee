"""Command-line interface for tcentre-hyperpol."""

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from tcentre_hyperpol import __version__
from tcentre_hyperpol.analyzers.fitkit import (
    SweepMode,
    WeightMode,
    default_holes_builder,
    fit_gamma_sd,
    fit_gfactor_calibration,
    fit_linewidth_spectrum,
    orientation_bound_sweep,
)
from tcentre_hyperpol.core.contracts import FitResult, HoleGFactors
from tcentre_hyperpol.core.exceptions import (
    FitConvergenceError,
    HyperpolError,
    NumericalError,
    ValidationError,
)
from tcentre_hyperpol.core.lineshape import HyperpolModel, LineshapeKind, LineshapeSpec
from tcentre_hyperpol.core.pipeline import (
    indistinguishability,
    map_linewidths,
    simulate_map,
    simulate_sweep,
    spectral_diffusion_width,
)
from tcentre_hyperpol.core.spinham import (
    FieldSpec,
    compute_hole_g,
    enumerate_orientations,
    propagate_alignment_uncertainty,
)
from tcentre_hyperpol.utils.config import RunConfig
from tcentre_hyperpol.utils.datafiles import (
    parse_gfactor_csv,
    parse_map_csv,
    parse_spectrum_csv,
    parse_sweep_csv,
    write_gfactor_csv,
    write_linewidth_csv,
    write_map_csv,
    write_orientation_map_csv,
    write_sweep_csv,
)

logger = logging.getLogger(__name__)

console = Console()
err_console = Console(stderr=True)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3

UNIT_SCALE = {"mhz": 1.0, "ghz": 1000.0}


def parse_vector(ctx, param, value: Optional[str]) -> Optional[Tuple[float, float, float]]:
    """click callback turning '1,1,0' into a 3-tuple of floats."""
    if value is None:
        return None
    try:
        parts = tuple(float(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected three comma-separated numbers, got {value!r}")
    if len(parts) != 3:
        raise click.BadParameter(f"expected three comma-separated numbers, got {value!r}")
    return parts


def parse_grid(ctx, param, value: str) -> Tuple[int, int]:
    """click callback turning '8x8' into (8, 8)."""
    try:
        n_theta, n_phi = (int(part) for part in value.lower().split("x"))
    except ValueError:
        raise click.BadParameter(f"expected NxM, got {value!r}")
    return n_theta, n_phi


def emit_json(payload: Dict[str, Any], output: Optional[str]) -> None:
    """Write the result document to a file, or to stdout when no file is given."""
    text = json.dumps(payload, indent=2)
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        with open(output, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        console.print(f"[green]✓ Result saved to {output}[/green]")
    else:
        click.echo(text)


def print_fit(result: FitResult, title: str) -> None:
    """Print fitted parameters in a table."""
    color = "green" if result.converged else "red"
    table = Table(title=title)
    table.add_column("Parameter", style="cyan")
    table.add_column("Value", justify="right")
    table.add_column("1σ", justify="right")
    for name, value in result.params.items():
        table.add_row(name, f"{value:.6g}", f"{result.sigmas[name]:.2g}")
    console.print(table)
    console.print(Panel(
        f"χ²_red = {result.chi2_reduced:.4g}\n{result.message}",
        title="Converged" if result.converged else "Not converged",
        border_style=color,
    ))


def print_holes(holes: HoleGFactors, direction: Sequence[float]) -> None:
    table = Table(title=f"Hole g-factors, B ∥ [{', '.join(f'{c:g}' for c in direction)}]")
    table.add_column("g_h", justify="right", style="cyan")
    table.add_column("Multiplicity", justify="right")
    table.add_column("σ", justify="right")
    for entry in holes.entries:
        table.add_row(f"{entry.g_h:.4f}", str(entry.multiplicity), f"{entry.sigma:.3g}")
    console.print(table)


def fit_exit_code(result: FitResult) -> int:
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def holes_along(cfg: RunConfig, direction: Sequence[float], field_gauss: float) -> HoleGFactors:
    model = cfg.hole_model()
    return compute_hole_g(model, enumerate_orientations(cfg.strain),
                          FieldSpec.along(direction, field_gauss))


def inhom_spec(kind: str, fwhm: Optional[float], unit: str) -> Optional[LineshapeSpec]:
    if fwhm is None:
        return None
    return LineshapeSpec(LineshapeKind(kind), fwhm * UNIT_SCALE[unit])


direction_option = click.option(
    "--dir", "direction", default="1,0,0", callback=parse_vector, show_default=True,
    help="Field direction in crystal coordinates, e.g. 1,0,0",
)
output_option = click.option("--output", "-o", type=click.Path(), help="Output JSON file")
inhom_options = [
    click.option("--inhom-fwhm", type=float, help="Inhomogeneous linewidth (see --unit)"),
    click.option("--inhom-kind", type=click.Choice([k.value for k in LineshapeKind]),
                 default=LineshapeKind.GLP.value, show_default=True,
                 help="Inhomogeneous lineshape"),
    click.option("--unit", type=click.Choice(sorted(UNIT_SCALE)), default="mhz",
                 show_default=True, help="Unit of --inhom-fwhm"),
]


def with_options(options):
    def decorator(f):
        for option in reversed(options):
            f = option(f)
        return f
    return decorator


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "-c", type=click.Path(), help="Path to config file (or $HYPERPOL_CONFIG)")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx, config, verbose):
    """tcentre-hyperpol - T centre hyperpolarization models and fits."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )
    ctx.obj = RunConfig.from_file(config) if config else RunConfig.from_env()


@cli.command()
@direction_option
@click.option("--field-gauss", type=float, default=100.0, show_default=True, help="Field magnitude")
@click.option("--incl-err-deg", type=float, help="Inclination alignment error (Monte-Carlo)")
@click.option("--azim-err-deg", type=float, default=0.0, show_default=True,
              help="Azimuthal alignment error (Monte-Carlo)")
@click.option("--samples", type=int, default=1000, show_default=True, help="Monte-Carlo samples")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed")
@click.option("--output", "-o", type=click.Path(), help="Output CSV file")
@click.pass_obj
def gfactors(cfg, direction, field_gauss, incl_err_deg, azim_err_deg, samples, seed, output):
    """Hole g-factors of the twelve orientational subsets for a field direction."""
    if incl_err_deg is None:
        holes = holes_along(cfg, direction, field_gauss)
    else:
        model = cfg.hole_model()
        holes = propagate_alignment_uncertainty(
            model, enumerate_orientations(cfg.strain), FieldSpec.along(direction, field_gauss),
            incl_err_deg, azim_err_deg, n_samples=samples, seed=seed,
        )
    print_holes(holes, direction)
    if output:
        write_gfactor_csv(holes, output)
        console.print(f"[green]✓ Table saved to {output}[/green]")
    return EXIT_OK


@cli.command("calibrate-g")
@click.argument("measured", type=click.Path())
@click.option("--axis", default="1,1,0", callback=parse_vector, show_default=True,
              help="Nominal field axis of the measurement")
@output_option
@click.pass_obj
def calibrate_g(cfg, measured, axis, output):
    """Fit g1, g2 and the field misalignment to twelve measured g-factors (CSV g_h,sigma)."""
    values, sigmas = parse_gfactor_csv(measured)
    logger.info(f"Calibrating against {len(values)} g-factors")
    result = fit_gfactor_calibration(values, sigmas, strain=cfg.strain, nominal_axis=axis,
                                     max_iter=cfg.fit.max_iter)
    if output:
        print_fit(result, "g-factor calibration")
    emit_json(result.to_dict(), output)
    return fit_exit_code(result)


@cli.command("simulate-sweep")
@click.option("--gamma-mhz", type=float, required=True, help="Homogeneous linewidth")
@click.option("--b-min", type=float, default=0.0, show_default=True, help="First field (G)")
@click.option("--b-max", type=float, required=True, help="Last field (G)")
@click.option("--n-points", type=int, default=41, show_default=True, help="Number of fields")
@direction_option
@with_options(inhom_options)
@click.option("--branch-ratio", type=float, default=0.0, show_default=True,
              help="Cross-spin to spin-conserving peak ratio r")
@click.option("--noise", type=float, default=0.0, show_default=True, help="Gaussian noise sigma")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed")
@click.option("--output", "-o", type=click.Path(), required=True, help="Output CSV file")
@click.pass_obj
def simulate_sweep_cmd(cfg, gamma_mhz, b_min, b_max, n_points, direction, inhom_fwhm,
                       inhom_kind, unit, branch_ratio, noise, seed, output):
    """Synthetic amplitude-versus-field sweep at zero detuning."""
    model = HyperpolModel(
        gamma=gamma_mhz,
        holes=holes_along(cfg, direction, 100.0),
        g_e=cfg.constants.g_e,
        branch_ratio_r=branch_ratio,
        inhom=inhom_spec(inhom_kind, inhom_fwhm, unit),
        mu_b_mhz_per_gauss=cfg.constants.mu_b_mhz_per_gauss,
    )
    sweep = simulate_sweep(model, np.linspace(b_min, b_max, n_points), noise, seed)
    write_sweep_csv(sweep, output)
    console.print(f"[green]✓ Sweep of {len(sweep)} points saved to {output}[/green]")
    return EXIT_OK


@cli.command("simulate-map")
@click.option("--gamma-mhz", type=float, required=True, help="Homogeneous linewidth")
@click.option("--b-max", type=float, required=True, help="Largest field (G)")
@click.option("--n-b", type=int, default=51, show_default=True, help="Number of fields")
@click.option("--delta-max", type=float, required=True, help="Largest detuning (MHz)")
@click.option("--n-delta", type=int, default=101, show_default=True, help="Number of detunings")
@direction_option
@click.option("--output", "-o", type=click.Path(), required=True, help="Output CSV file")
@click.pass_obj
def simulate_map_cmd(cfg, gamma_mhz, b_max, n_b, delta_max, n_delta, direction, output):
    """Synthetic PLE map over field and detuning."""
    model = HyperpolModel(
        gamma=gamma_mhz,
        holes=holes_along(cfg, direction, 100.0),
        g_e=cfg.constants.g_e,
        mu_b_mhz_per_gauss=cfg.constants.mu_b_mhz_per_gauss,
    )
    ple_map = simulate_map(model, np.linspace(0.0, b_max, n_b),
                           np.linspace(-delta_max, delta_max, n_delta))
    write_map_csv(ple_map, output)
    console.print(f"[green]✓ Map of {n_b}x{n_delta} points saved to {output}[/green]")
    return EXIT_OK


@cli.command("fit-spectrum")
@click.argument("spectrum", type=click.Path())
@click.option("--shape", type=click.Choice([k.value for k in LineshapeKind]),
              default=LineshapeKind.LORENTZIAN.value, show_default=True, help="Fitted lineshape")
@click.option("--residual-gauss", type=float, default=0.0, show_default=True,
              help="Residual field during the scan")
@direction_option
@click.option("--unit", type=click.Choice(sorted(UNIT_SCALE)), default="mhz",
              show_default=True, help="Unit of the detuning column")
@output_option
@click.pass_obj
def fit_spectrum(cfg, spectrum, shape, residual_gauss, direction, unit, output):
    """Fit the linewidth of a PLE spectrum (CSV delta_mhz,counts[,sigma])."""
    data = parse_spectrum_csv(spectrum, delta_scale=UNIT_SCALE[unit])
    holes = holes_along(cfg, direction, 100.0) if residual_gauss > 0 else None
    result = fit_linewidth_spectrum(data, LineshapeKind(shape), residual_gauss, holes,
                                    cfg.constants.g_e, max_iter=cfg.fit.max_iter)
    if output:
        print_fit(result, "Spectrum linewidth")
    emit_json(result.to_dict(), output)
    return fit_exit_code(result)


@cli.command("fit-sweep")
@click.argument("sweep", type=click.Path())
@click.option("--mode", type=click.Choice([m.value for m in SweepMode]),
              default=SweepMode.HOMOGENEOUS.value, show_default=True, help="Amplitude model")
@click.option("--weight-mode", type=click.Choice([m.value for m in WeightMode]),
              default=WeightMode.EQUAL.value, show_default=True, help="Subset weighting")
@direction_option
@with_options(inhom_options)
@click.option("--branch-ratio", type=float, default=0.0, show_default=True,
              help="Cross-spin to spin-conserving peak ratio r")
@click.option("--fit-offset", is_flag=True, help="Fit a constant offset")
@click.option("--temperature-k", type=float, help="Subtract the tabulated thermal broadening")
@output_option
@click.pass_obj
def fit_sweep(cfg, sweep, mode, weight_mode, direction, inhom_fwhm, inhom_kind, unit,
              branch_ratio, fit_offset, temperature_k, output):
    """Fit the spectral-diffusion width of a field sweep (CSV b_gauss,amplitude[,sigma])."""
    data = parse_sweep_csv(sweep)
    options = cfg.fit
    if fit_offset:
        options = replace(options, fit_offset=True)
    result = fit_gamma_sd(
        data,
        holes_along(cfg, direction, 100.0),
        cfg.constants.g_e,
        SweepMode(mode),
        inhom_spec(inhom_kind, inhom_fwhm, unit),
        WeightMode(weight_mode),
        branch_ratio,
        options,
    )
    payload = result.to_dict()
    payload["gamma_sd_mhz"] = spectral_diffusion_width(result.params["gamma_mhz"], temperature_k)
    if output:
        print_fit(result, "Spectral-diffusion width")
    emit_json(payload, output)
    return fit_exit_code(result)


@cli.command("orientation-bound")
@click.argument("sweep", type=click.Path())
@click.option("--grid", default="8x8", callback=parse_grid, show_default=True,
              help="Grid size NxM over theta and phi in [0, pi/2]")
@click.option("--mode", type=click.Choice([m.value for m in SweepMode]),
              default=SweepMode.HOMOGENEOUS.value, show_default=True, help="Amplitude model")
@with_options(inhom_options)
@click.option("--workers", type=int, default=1, show_default=True, help="Parallel fits")
@click.option("--map-output", type=click.Path(), required=True, help="Output map CSV file")
@output_option
@click.pass_obj
def orientation_bound(cfg, sweep, grid, mode, inhom_fwhm, inhom_kind, unit, workers,
                      map_output, output):
    """Fit a sweep for every field direction on a grid and report the largest width."""
    data = parse_sweep_csv(sweep)
    model = cfg.hole_model()
    builder = default_holes_builder(model, enumerate_orientations(cfg.strain))
    orientation_map = orientation_bound_sweep(
        data,
        grid=grid,
        holes_builder=builder,
        g_e=cfg.constants.g_e,
        mode=SweepMode(mode),
        inhom=inhom_spec(inhom_kind, inhom_fwhm, unit),
        options=cfg.fit,
        workers=workers,
    )
    write_orientation_map_csv(orientation_map, map_output)
    theta, phi, gamma = orientation_map.max_point
    if output:
        console.print(Panel(
            f"Γ_sd ≤ {gamma:.4g} MHz at θ = {theta / np.pi:.3f}π, φ = {phi / np.pi:.3f}π",
            title="Orientation bound",
            border_style="green",
        ))
    emit_json(orientation_map.to_dict(), output)
    return EXIT_OK


@cli.command("map-linewidths")
@click.argument("ple_map", type=click.Path())
@click.option("--output", "-o", type=click.Path(), required=True, help="Output CSV file")
@click.pass_obj
def map_linewidths_cmd(cfg, ple_map, output):
    """Lorentzian FWHM of every fixed-field row of a PLE map (CSV b_gauss,delta_mhz,amplitude)."""
    table = map_linewidths(parse_map_csv(ple_map), max_iter=cfg.fit.max_iter)
    write_linewidth_csv(table, output)
    console.print(f"[green]✓ {len(table.rows)} linewidths saved to {output}[/green]")
    if table.flagged:
        console.print(f"[yellow]Rows not fitted at B = "
                      f"{', '.join(f'{b:g}' for b in table.flagged)} G[/yellow]")
    return EXIT_OK


@cli.command()
@click.option("--gamma-sd-mhz", type=float, required=True, help="Spectral-diffusion width")
@click.option("--xi", type=float, help="Debye-Waller factor (config default)")
@click.option("--gamma1-mhz", type=float, help="Lifetime-limited linewidth (config default)")
@output_option
@click.pass_obj
def indist(cfg, gamma_sd_mhz, xi, gamma1_mhz, output):
    """Two-photon indistinguishability from the spectral-diffusion width."""
    result = indistinguishability(
        gamma_sd_mhz,
        xi=xi if xi is not None else cfg.constants.xi,
        gamma1_mhz=gamma1_mhz if gamma1_mhz is not None else cfg.constants.gamma1_mhz,
    )
    emit_json(result.to_dict(), output)
    return EXIT_OK


@cli.command("init-config")
@click.option("--output", "-o", type=click.Path(), default="hyperpol_config.json",
              show_default=True, help="Output config file path")
def init_config(output):
    """Write a configuration file holding every default."""
    RunConfig().save(output)
    console.print(f"[green]✓ Configuration template created at {output}[/green]")
    console.print("\nEdit the file, then pass it with --config or set HYPERPOL_CONFIG.")
    return EXIT_OK


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and map outcomes to exit codes.

    0 success, 1 usage error, 2 invalid input, 3 fit or quadrature non-convergence.
    """
    try:
        code = cli.main(args=list(argv) if argv is not None else None,
                        prog_name="tcentre-hyperpol", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        err_console.print("[red]Aborted[/red]")
        return EXIT_USAGE
    except ValidationError as exc:
        err_console.print(f"[red]Error: {exc}[/red]")
        return EXIT_VALIDATION
    except (FitConvergenceError, NumericalError) as exc:
        err_console.print(f"[red]Not converged: {exc}[/red]")
        return EXIT_NOT_CONVERGED
    except HyperpolError as exc:
        err_console.print(f"[red]Error: {exc}[/red]")
        return EXIT_USAGE
    return code if isinstance(code, int) else EXIT_OK


def main():
    """Main entry point."""
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
