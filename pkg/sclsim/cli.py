"""
Sclsim CLI - closed-loop side-channel leakage simulator

A command-line tool for simulating on-chip leakage detection and mitigation:
1. calibrate: fixed-vs-random TVLA campaign with per-sensor |t| series
2. run: closed detect-and-mitigate loop with controller events and overhead
3. attack: measurements-to-disclosure with countermeasures off, forced on and adaptive
4. sweep: the (MTD, overhead) frontier over a grid of controller thresholds
"""

import asyncio
import logging
from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from sclsim import __version__
from sclsim.cache import CacheManager
from sclsim.countermeasures import CountermeasureBank, armed_summary
from sclsim.exceptions import SimulationError, exit_code_for
from sclsim.pipeline import RunContext, SimulationPipeline, build_layout, load_config
from sclsim.schemas import ExperimentConfig, RunReport

app = typer.Typer(
    name="sclsim",
    help="Closed-loop power side-channel leakage detection and mitigation simulator",
    add_completion=False,
)

console = Console()

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="Config file of section.key=value lines")
SEED_OPTION = typer.Option(None, "--seed", "-s", help="Base seed (overrides the config)")
OUT_OPTION = typer.Option(Path("./runs"), "--out", "-o", help="Output directory for run directories")
SET_OPTION = typer.Option(None, "--set", help="Override a config key, e.g. --set controller.th_high=6 (repeatable)")
FORCE_OPTION = typer.Option(False, "--force", "-f", help="Bypass the run cache")


@app.callback()
def main_callback(
    verbose: bool = typer.Option(False, "--verbose", "-V", help="Debug logging"),
):
    """Closed-loop power side-channel leakage detection and mitigation simulator."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _fmt(value: Optional[float], digits: int = 3) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _load(mode: Optional[str], config: Optional[Path], seed: Optional[int], overrides: Optional[List[str]]) -> ExperimentConfig:
    try:
        return load_config(config, overrides or [], seed, mode=mode)
    except SimulationError as e:
        console.print(f"[red]❌ Config error: {escape(str(e))}[/red]")
        raise typer.Exit(exit_code_for(e))


def _simulate(
    mode: str,
    config_path: Optional[Path],
    seed: Optional[int],
    out: Path,
    overrides: Optional[List[str]],
    force: bool,
) -> None:
    config = _load(mode, config_path, seed, overrides)
    output_dir = out.resolve()

    console.print(Panel.fit(
        f"[bold cyan]sclsim {mode}[/bold cyan]\n\n"
        f"Config: [yellow]{config_path or 'defaults'}[/yellow]\n"
        f"Seed: [yellow]{config.seed}[/yellow]\n"
        f"Output: [yellow]{output_dir}[/yellow]",
        border_style="cyan"
    ))

    error: Optional[BaseException] = None
    try:
        result = asyncio.run(SimulationPipeline(config, output_dir).run(force=force))
    except KeyboardInterrupt:
        console.print("\n[yellow]⚠️  Simulation interrupted by user[/yellow]")
        raise typer.Exit(1)
    except Exception as e:
        error = e
    if error is not None:
        console.print(f"\n[red]❌ Error: {escape(str(error))}[/red]")
        raise typer.Exit(exit_code_for(error))

    if result["cached"]:
        console.print(f"\n✅ [bold green]Cache hit![/bold green] Using results from run: {result['run_id']}")
        console.print("   [dim]Use --force to bypass cache and re-run[/dim]")
    render_report(result["report"])
    console.print(f"\n[bold]📁 Results saved to:[/bold] [cyan]{result['run_dir']}[/cyan]")


def render_report(report: RunReport) -> None:
    """Print a run report as rich panels and tables."""
    wall_clock = f"{report.wall_clock_seconds:.1f}s" if report.wall_clock_seconds is not None else "-"
    console.print(Panel.fit(
        f"[bold green]✨ {report.mode} complete[/bold green]\n\n"
        f"Seed: [cyan]{report.seed}[/cyan]   Traces: [cyan]{report.n_traces}[/cyan]   "
        f"Windows/trace: [cyan]{report.windows_per_trace}[/cyan]\n"
        f"Controller events: [cyan]{len(report.events)}[/cyan]   "
        f"Extra energy: [cyan]{report.overhead.extra_energy:.3f}[/cyan]   "
        f"ACC duty: [cyan]{report.overhead.activations_duty:.3f}[/cyan]\n"
        f"Hook violations: [cyan]{report.hook_violations}[/cyan]   Wall clock: [cyan]{wall_clock}[/cyan]",
        border_style="green"
    ))

    if report.sensor_scores:
        table = Table(title="Sensors", show_header=True, header_style="bold cyan")
        for column in ("sensor", "detector", "max", "final", "peak window", "scored windows"):
            table.add_column(column)
        crossings = report.calibration.first_crossing if report.calibration else []
        if crossings:
            table.add_column("first crossing")
        for s in report.sensor_scores:
            row = [str(s.sensor_id), s.detector, _fmt(s.max_score), _fmt(s.final_score),
                   "-" if s.peak_window is None else str(s.peak_window), str(s.scored_windows)]
            if crossings:
                crossing = crossings[s.sensor_id]
                row.append("-" if crossing is None else str(crossing))
            table.add_row(*row)
        console.print(table)

    if report.events:
        table = Table(title=f"Controller events (first 20 of {len(report.events)})", show_header=True,
                      header_style="bold cyan")
        for column in ("window", "sensor", "acc", "transition", "score"):
            table.add_column(column)
        for e in report.events[:20]:
            table.add_row(str(e.window_idx), str(e.sensor_id), str(e.acc_id), e.transition, _fmt(e.score))
        console.print(table)

    if report.attack is not None:
        table = Table(title=f"Attack on key byte {report.attack.byte_index}", show_header=True,
                      header_style="bold cyan")
        for column in ("regime", "MTD", "final rank", "extra energy", "activations"):
            table.add_column(column)
        for r in report.attack.regimes:
            table.add_row(r.regime, "not disclosed" if r.mtd is None else str(r.mtd),
                          "-" if r.final_rank is None else str(r.final_rank), _fmt(r.extra_energy), _fmt(r.activations, 1))
        console.print(table)

    if report.frontier:
        table = Table(title="Threshold frontier", show_header=True, header_style="bold cyan")
        for column in ("th_high", "th_low", "MTD", "extra energy", "activations"):
            table.add_column(column)
        for f in report.frontier:
            table.add_row(_fmt(f.th_high, 2), _fmt(f.th_low, 2), "not disclosed" if f.mtd is None else str(f.mtd),
                          _fmt(f.extra_energy), _fmt(f.activations, 1))
        console.print(table)


@app.command()
def calibrate(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out: Path = OUT_OPTION,
    overrides: Optional[List[str]] = SET_OPTION,
    force: bool = FORCE_OPTION,
):
    """
    Fixed-vs-random TVLA calibration.

    Alternates fixed and random plaintexts, reports |t| per sensor over the
    trace count and the per-region mean power used as equalizer targets.
    """
    _simulate("calibrate", config, seed, out, overrides, force)


@app.command()
def run(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out: Path = OUT_OPTION,
    overrides: Optional[List[str]] = SET_OPTION,
    force: bool = FORCE_OPTION,
):
    """Closed-loop simulation: NICV detection drives the ACC controller."""
    _simulate("run", config, seed, out, overrides, force)


@app.command()
def attack(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out: Path = OUT_OPTION,
    overrides: Optional[List[str]] = SET_OPTION,
    force: bool = FORCE_OPTION,
):
    """CPA measurements-to-disclosure with countermeasures off, forced on and adaptive."""
    _simulate("attack", config, seed, out, overrides, force)


@app.command()
def sweep(
    config: Optional[Path] = CONFIG_OPTION,
    seed: Optional[int] = SEED_OPTION,
    out: Path = OUT_OPTION,
    overrides: Optional[List[str]] = SET_OPTION,
    force: bool = FORCE_OPTION,
):
    """Sweep (th_high, th_low) and write the MTD / overhead frontier."""
    _simulate("sweep", config, seed, out, overrides, force)


@app.command()
def show(
    run_dir: Path = typer.Argument(..., help="Run directory containing report.json"),
):
    """Re-render a saved run report."""
    try:
        context = RunContext.load(run_dir)
        report = context.load_report()
    except FileNotFoundError as e:
        console.print(f"[red]❌ {escape(str(e))}[/red]")
        raise typer.Exit(1)
    report = report.model_copy(update={"wall_clock_seconds": context.wall_clock_seconds})
    console.print(f"Run [cyan]{context.run_id}[/cyan] ({context.status})")
    render_report(report)


@app.command()
def runs(
    out: Path = OUT_OPTION,
    mode: Optional[str] = typer.Option(None, "--mode", "-m", help="Only runs of this mode"),
    invalidate: Optional[str] = typer.Option(None, "--invalidate", help="Drop RUN_ID from the cache index"),
):
    """List the cached runs under the output directory, newest first."""
    cache = CacheManager(out.resolve())
    if invalidate is not None:
        entry = cache.get_run_metadata(invalidate)
        if entry is None or not cache.invalidate_cache(invalidate):
            console.print(f"[red]❌ No run {escape(invalidate)} in {cache.cache_file}[/red]")
            raise typer.Exit(1)
        console.print(f"Dropped [cyan]{invalidate}[/cyan] ({entry['status']}); its directory is left on disk")
        return

    entries = cache.list_runs(mode)
    if not entries:
        console.print("[dim]No runs recorded[/dim]")
        return
    table = Table(title=f"Runs in {cache.data_dir}", show_header=True, header_style="bold cyan")
    for column in ("run id", "mode", "seed", "status", "started"):
        table.add_column(column)
    for entry in entries:
        table.add_row(entry["run_id"], entry["mode"], str(entry["seed"]), entry["status"], entry["timestamp"][:19])
    console.print(table)


@app.command()
def floorplan(
    config: Optional[Path] = CONFIG_OPTION,
    overrides: Optional[List[str]] = SET_OPTION,
):
    """Print the floorplan, sensor placement and ACC wiring."""
    experiment = _load(None, config, None, overrides)
    try:
        layout = build_layout(experiment)
    except SimulationError as e:
        console.print(f"[red]❌ {escape(str(e))}[/red]")
        raise typer.Exit(exit_code_for(e))

    fp = layout.floorplan
    grid = [["." for _ in range(fp.width)] for _ in range(fp.height)]
    for region in fp.regions:
        grid[region.y][region.x] = "r"
    for p in layout.placements:
        grid[p.y][p.x] = str(p.sensor_id) if p.sensor_id < 10 else "S"
    console.print(Panel.fit(
        "\n".join(" ".join(row) for row in grid),
        title=f"{fp.width}x{fp.height} grid, {fp.n_regions} regions",
        border_style="cyan",
    ))

    bank = CountermeasureBank.from_config(
        experiment.countermeasure, layout.acc_map, layout.n_regions, layout.n_steps, experiment.sensors.window
    )
    cells = armed_summary(bank)
    table = Table(title="Sensors and ACCs", show_header=True, header_style="bold cyan")
    for column in ("sensor", "x", "y", "acc", "countermeasure", "protected regions"):
        table.add_column(column)
    for p in layout.placements:
        acc_id = layout.acc_map.sensor_to_acc[p.sensor_id]
        regions = ", ".join(str(r) for r in layout.acc_map.acc_regions[acc_id])
        table.add_row(str(p.sensor_id), str(p.x), str(p.y), str(acc_id), cells[acc_id], regions)
    console.print(table)
    if not bank.is_armed:
        console.print("[dim]No ACC is armed: the controller will switch nothing[/dim]")


@app.command()
def version():
    """Show the version of sclsim."""
    console.print(f"[bold cyan]sclsim[/bold cyan] v{__version__}")
    console.print("Closed-loop side-channel leakage simulator")


def main():
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
