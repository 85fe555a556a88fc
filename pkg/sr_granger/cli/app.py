"""Main CLI application for sr-granger."""

import csv
import io
import json
import math
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import typer
import yaml
from rich.console import Console
from rich.table import Table

from sr_granger import __version__
from sr_granger.bivar_oracle import Bivar1Params, oracle_comparison
from sr_granger.cli.logging_config import get_logger, setup_cli_logging
from sr_granger.errors import GrangerError
from sr_granger.experiment import (
    ErrorRateReport,
    error_rate_experiment,
    list_presets,
    load_config,
    load_preset,
)
from sr_granger.gc_estimators import (
    FULL_BAND,
    FrequencyBand,
    gc_band,
    gc_spectrum,
    gc_time_lr,
    gc_time_sr,
)
from sr_granger.inference import (
    FixedOrder,
    OrderPolicy,
    SelectOrder,
    lr_test,
    projection_test,
)
from sr_granger.null_dist import (
    gamma_approx,
    genchi2_cdf_detail,
    genchi2_moments,
    genchi2_quantile,
    null_law,
)
from sr_granger.report import ReportRenderer
from sr_granger.sampling import OrderCriterion, TimeSeries, fit_var_ols, simulate
from sr_granger.serialization import (
    model_to_dict,
    read_model,
    read_series,
    series_to_csv,
)
from sr_granger.var_model import (
    ModelMode,
    Null,
    Partition,
    TargetGC,
    VarParams,
    random_var,
)

# Create the main Typer app
app = typer.Typer(
    name="sr-granger",
    help="Single-regression Granger causality: estimation, null laws and tests",
    add_completion=False,
)
model_app = typer.Typer(help="Generate and inspect VAR models", add_completion=False)
app.add_typer(model_app, name="model")

console = Console()
err_console = Console(stderr=True)

NULL_QUANTILES = (0.9, 0.95, 0.99)


@dataclass(frozen=True)
class CliConfig:
    """Global options shared by every command; command flags override them."""

    seed: int | None = None
    fmt: str | None = None
    out: Path | None = None

    def resolve_seed(self, seed: int | None) -> int:
        if seed is not None:
            return seed
        return self.seed if self.seed is not None else 0

    def resolve_format(self, fmt: str | None, default: str, allowed: tuple[str, ...]) -> str:
        chosen = fmt or self.fmt or default
        if chosen not in allowed:
            raise ValueError(f"Unsupported format: {chosen}. Supported: {list(allowed)}")
        return chosen

    def resolve_out(self, out: Path | None) -> Path | None:
        return out if out is not None else self.out


def _config(ctx: typer.Context) -> CliConfig:
    return ctx.obj if isinstance(ctx.obj, CliConfig) else CliConfig()


@app.callback()
def main_callback(
    ctx: typer.Context,
    verbose: int = typer.Option(
        0,
        "-v",
        "--verbose",
        count=True,
        help="Increase verbosity (use -v, -vv)",
    ),
    log_file: str | None = typer.Option(
        None,
        "--log-file",
        help="Write logs to file",
    ),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Only log errors"),
    seed: int | None = typer.Option(None, "--seed", help="Master random seed (64-bit)"),
    fmt: str | None = typer.Option(None, "--format", help="Output format: json or csv"),
    out: Path | None = typer.Option(None, "--out", help="Write results here instead of stdout"),
) -> None:
    """sr-granger - single-regression Granger causality toolkit."""
    setup_cli_logging(verbose=verbose, log_file=log_file, quiet=quiet)
    ctx.obj = CliConfig(seed=seed, fmt=fmt, out=out)


@contextmanager
def _errors(command: str) -> Iterator[None]:
    """Map library failures to a red error line and the matching exit code."""
    logger = get_logger(__name__)
    logger.info("Command invoked", command=command)
    try:
        yield
    except GrangerError as e:
        logger.error("Command failed", command=command, error=type(e).__name__)
        err_console.print(f"[red]Error ({type(e).__name__}): {e}[/red]")
        raise typer.Exit(e.exit_code) from e
    except (ValueError, KeyError, FileNotFoundError, yaml.YAMLError) as e:
        logger.error("Command failed", command=command, error=type(e).__name__)
        err_console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(1) from e
    logger.info("Command completed", command=command)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        typer.echo(text, nl=not text.endswith("\n"))
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text if text.endswith("\n") else text + "\n")


def _emit_json(data: Any, out: Path | None) -> None:
    _emit(json.dumps(data, indent=2), out)


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _emit_csv(header: list[str], rows: Iterable[Iterable[Any]], out: Path | None) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([_cell(v) for v in row] for row in rows)
    _emit(buffer.getvalue(), out)


def _partition(n: int, from_file: Partition | None, nx: int | None) -> Partition:
    if nx is not None:
        partition = Partition.from_nx(n, nx)
    elif from_file is not None:
        partition = from_file
    else:
        raise ValueError("a partition is required: pass --partition NX")
    partition.check(n)
    return partition


def _band(
    band: tuple[float, float] | None, hz: bool, fs: float | None
) -> FrequencyBand | None:
    if band is None or band[0] is None:
        return None
    lo, hi = float(band[0]), float(band[1])
    if hz:
        if fs is None:
            raise ValueError("--hz needs --fs (sampling rate)")
        return FrequencyBand.from_hz(lo, hi, fs)
    return FrequencyBand(lo, hi)


def _order_policy(order: int | None, select: str | None, p_max: int | None) -> OrderPolicy:
    if select is not None:
        if p_max is None:
            raise ValueError("--select needs --pmax")
        return SelectOrder(OrderCriterion(select.lower()), p_max)
    if order is None:
        raise ValueError("pass --order P or --select CRITERION --pmax P")
    return FixedOrder(order)


def _load_source(
    source: Path, order: int | None
) -> tuple[VarParams, Partition | None, TimeSeries | None]:
    """A model JSON as is, or a CSV series fitted at the given order."""
    if source.suffix.lower() == ".json":
        model, partition = read_model(source)
        return model, partition, None
    if order is None:
        raise ValueError("a data file needs -p/--order for the VAR fit")
    data = read_series(source)
    return fit_var_ols(data, order), None, data


@app.command()
def version() -> None:
    """Show version information."""
    logger = get_logger(__name__)
    logger.info("Version command invoked")

    table = Table(title="sr-granger")
    table.add_column("Component", style="cyan")
    table.add_column("Version", style="magenta")
    table.add_row("sr-granger", __version__)
    table.add_row("Python", "3.10+")
    console.print(table)




@model_app.command("random")
def model_random(
    ctx: typer.Context,
    nx: int = typer.Option(..., "--nx", help="Target block size"),
    ny: int = typer.Option(..., "--ny", help="Source block size"),
    order: int = typer.Option(..., "-p", "--order", help="Model order"),
    rho: float = typer.Option(0.9, "--rho", help="Spectral radius"),
    gamma: float = typer.Option(1.0, "--gamma", help="Residual log-generalised correlation"),
    null: bool = typer.Option(False, "--null", help="Zero all y->x coefficients"),
    gc: float | None = typer.Option(None, "--gc", help="Target population GC"),
    seed: int | None = typer.Option(None, "--seed", help="Random seed"),
    out: Path | None = typer.Option(None, "--out", help="Write model JSON here"),
) -> None:
    """Draw a random stable VAR model."""
    cfg = _config(ctx)
    with _errors("model random"):
        if null and gc is not None:
            raise ValueError("--null and --gc are mutually exclusive")
        mode: ModelMode = TargetGC(gc) if gc is not None else Null()
        partition = Partition(nx, ny)
        rng = _rng(cfg.resolve_seed(seed))
        model = random_var(nx + ny, order, partition, rho, gamma, mode, rng)
        _emit_json(model_to_dict(model, partition), cfg.resolve_out(out))


@model_app.command("info")
def model_info(
    ctx: typer.Context,
    model_file: Path = typer.Argument(..., help="Model JSON"),
    nx: int | None = typer.Option(None, "--partition", help="Target block size nx"),
    fmt: str | None = typer.Option(None, "--format", help="json, csv or table"),
) -> None:
    """Validate a model and report its derived quantities."""
    cfg = _config(ctx)
    with _errors("model info"):
        chosen = cfg.resolve_format(fmt, "json", ("json", "csv", "table"))
        model, from_file = read_model(model_file)
        partition = _partition(model.n, from_file, nx)
        info: dict[str, Any] = {
            "n": model.n,
            "p": model.p,
            "partition": {"nx": partition.nx, "ny": partition.ny},
            "spectral_radius": model.spectral_radius,
            "gamma": model.log_generalised_correlation(),
            "gc": gc_time_sr(model, partition).value,
            "is_null": model.is_null(partition),
        }
        if info["is_null"]:
            law = null_law(model, partition)
            mu, sigma2 = genchi2_moments(law)
            info["null_weights"] = {
                "count": int(law.weights.size),
                "max": float(law.weights[0]),
                "min": float(law.weights[-1]),
                "mean": mu,
                "variance": sigma2,
            }
        if chosen == "table":
            table = Table(title=str(model_file))
            table.add_column("Quantity", style="cyan")
            table.add_column("Value", style="magenta")
            for key, value in info.items():
                table.add_row(key, json.dumps(value))
            console.print(table)
        elif chosen == "csv":
            _emit_csv(["quantity", "value"], _flatten(info), cfg.out)
        else:
            _emit_json(info, cfg.out)


def _flatten(data: dict[str, Any], prefix: str = "") -> list[tuple[str, Any]]:
    rows: list[tuple[str, Any]] = []
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(_flatten(value, f"{name}."))
        elif isinstance(value, list):
            rows.extend((f"{name}.{i}", v) for i, v in enumerate(value))
        else:
            rows.append((name, value))
    return rows


@app.command("simulate")
def simulate_command(
    ctx: typer.Context,
    model_file: Path = typer.Argument(..., help="Model JSON"),
    length: int = typer.Option(..., "-N", "--length", help="Samples to keep"),
    burn_in: int | None = typer.Option(None, "--burn-in", help="Samples to discard"),
    seed: int | None = typer.Option(None, "--seed", help="Random seed"),
    out: Path | None = typer.Option(None, "--out", help="Write CSV here"),
) -> None:
    """Simulate a time series from a model as CSV."""
    cfg = _config(ctx)
    with _errors("simulate"):
        model, _ = read_model(model_file)
        series = simulate(model, length, _rng(cfg.resolve_seed(seed)), burn_in=burn_in)
        _emit(series_to_csv(series), cfg.resolve_out(out))


@app.command("gc")
def gc_command(
    ctx: typer.Context,
    source: Path = typer.Argument(..., help="Model JSON or data CSV"),
    order: int | None = typer.Option(None, "-p", "--order", help="VAR order for data"),
    nx: int | None = typer.Option(None, "--partition", help="Target block size nx"),
    band: tuple[float, float] | None = typer.Option(None, "--band", help="Band LO HI"),
    spectrum: int | None = typer.Option(None, "--spectrum", help="Grid points on [0, 2pi]"),
    lr: bool = typer.Option(False, "--lr", help="Dual-regression GC (data only)"),
    hz: bool = typer.Option(False, "--hz", help="Band given in Hz"),
    fs: float | None = typer.Option(None, "--fs", help="Sampling rate for --hz"),
    fmt: str | None = typer.Option(None, "--format", help="json or csv"),
    out: Path | None = typer.Option(None, "--out", help="Write output here"),
) -> None:
    """Granger causality y -> x of a model or of a VAR fitted to data."""
    cfg = _config(ctx)
    with _errors("gc"):
        chosen = cfg.resolve_format(fmt, "json", ("json", "csv"))
        target = cfg.resolve_out(out)
        model, from_file, data = _load_source(source, order)
        partition = _partition(model.n, from_file, nx)
        freq_band = _band(band, hz, fs)

        if spectrum is not None:
            omegas = np.linspace(0.0, 2.0 * math.pi, spectrum)
            values = gc_spectrum(model, partition, omegas)
            if chosen == "csv":
                _emit_csv(["omega", "f"], zip(omegas.tolist(), values.tolist(), strict=True), target)
            else:
                _emit_json({"omega": omegas.tolist(), "f": values.tolist()}, target)
            return

        if lr:
            if data is None or order is None:
                raise ValueError("--lr needs a data file and --order")
            result = gc_time_lr(data, order, partition)
        elif freq_band is not None:
            result = gc_band(model, partition, freq_band)
        else:
            result = gc_time_sr(model, partition)
        if chosen == "csv":
            _emit_csv(["kind", "value"], [(result.kind.value, result.value)], target)
        else:
            _emit_json(result.to_dict(), target)


@app.command("nulldist")
def nulldist_command(
    ctx: typer.Context,
    model_file: Path = typer.Argument(..., help="Null model JSON"),
    nx: int | None = typer.Option(None, "--partition", help="Target block size nx"),
    band: tuple[float, float] | None = typer.Option(None, "--band", help="Band LO HI"),
    hz: bool = typer.Option(False, "--hz", help="Band given in Hz"),
    fs: float | None = typer.Option(None, "--fs", help="Sampling rate for --hz"),
    fmt: str | None = typer.Option(None, "--format", help="json or csv"),
    out: Path | None = typer.Option(None, "--out", help="Write output here"),
) -> None:
    """Asymptotic null law of N times the single-regression GC estimator."""
    cfg = _config(ctx)
    with _errors("nulldist"):
        chosen = cfg.resolve_format(fmt, "json", ("json", "csv"))
        model, from_file = read_model(model_file)
        partition = _partition(model.n, from_file, nx)
        law = null_law(model, partition, _band(band, hz, fs))
        mu, sigma2 = genchi2_moments(law)
        summary: dict[str, Any] = {
            "law": law.to_dict(),
            "moments": {"mean": mu, "variance": sigma2},
            "gamma_approx": gamma_approx(law).to_dict(),
            "quantiles": {str(q): genchi2_quantile(law, q) for q in NULL_QUANTILES},
        }
        summary["dropped_mass"] = genchi2_cdf_detail(law, summary["quantiles"]["0.95"]).dropped_mass
        if chosen == "csv":
            _emit_csv(["quantity", "value"], _flatten(summary), cfg.resolve_out(out))
        else:
            _emit_json(summary, cfg.resolve_out(out))


@app.command("test")
def test_command(
    ctx: typer.Context,
    data_file: Path = typer.Argument(..., help="Data CSV"),
    nx: int = typer.Option(..., "--partition", help="Target block size nx"),
    alpha: float = typer.Option(0.05, "--alpha", help="Significance level"),
    order: int | None = typer.Option(None, "-p", "--order", help="Fixed VAR order"),
    select: str | None = typer.Option(None, "--select", help="bic, hqic or aic"),
    p_max: int | None = typer.Option(None, "--pmax", help="Largest order for --select"),
    method: str = typer.Option("projection", "--method", help="projection or lr"),
    band: tuple[float, float] | None = typer.Option(None, "--band", help="Band LO HI"),
    null_law_kind: str = typer.Option("exact", "--null-law", help="exact or gamma"),
    hz: bool = typer.Option(False, "--hz", help="Band given in Hz"),
    fs: float | None = typer.Option(None, "--fs", help="Sampling rate for --hz"),
    fmt: str | None = typer.Option(None, "--format", help="json or csv"),
    out: Path | None = typer.Option(None, "--out", help="Write result here"),
) -> None:
    """Test for Granger causality y -> x in a data file."""
    cfg = _config(ctx)
    with _errors("test"):
        chosen = cfg.resolve_format(fmt, "json", ("json", "csv"))
        data = read_series(data_file)
        partition = Partition.from_nx(data.n, nx)
        policy = _order_policy(order, select, p_max)
        freq_band = _band(band, hz, fs)
        if method == "projection":
            if null_law_kind not in ("exact", "gamma"):
                raise ValueError(f"Unknown null law: {null_law_kind}")
            result = projection_test(
                data,
                partition,
                alpha,
                policy,
                freq_band,
                "gamma" if null_law_kind == "gamma" else "exact",
            )
        elif method == "lr":
            if freq_band is not None:
                raise ValueError("the LR test has no band-limited form")
            result = lr_test(data, partition, alpha, policy)
        else:
            raise ValueError(f"Unknown method: {method}. Supported: ['projection', 'lr']")
        if chosen == "csv":
            header = ["method", "kind", "value", "scaled", "p_value", "critical", "reject", "alpha", "fitted_order"]
            row = [
                result.method,
                result.statistic.kind.value,
                result.statistic.value,
                result.scaled,
                result.p_value,
                result.critical,
                result.reject,
                result.alpha,
                result.fitted_order,
            ]
            _emit_csv(header, [row], cfg.resolve_out(out))
        else:
            _emit_json(result.to_dict(), cfg.resolve_out(out))


def _print_summary(report: ErrorRateReport) -> None:
    table = Table(title=f"{report.rate_kind.replace('_', ' ').title()} error rates")
    for column in ("N", "test", "mean", "2.5%", "97.5%", "pooled", "excluded"):
        table.add_column(column, style="cyan" if column in ("N", "test") else "magenta")
    for c in report.cells:
        table.add_row(
            str(c.N),
            c.test,
            f"{c.mean:.4f}",
            f"{c.lower:.4f}",
            f"{c.upper:.4f}",
            f"{c.pooled_rate:.4f}",
            f"{c.exclusion_fraction:.3f}" + (" !" if c.flagged else ""),
        )
    console.print(table)


@app.command("experiment")
def experiment_command(
    ctx: typer.Context,
    config_file: Path | None = typer.Argument(None, help="Experiment YAML/JSON"),
    preset: str | None = typer.Option(None, "--preset", help="Packaged preset name"),
    workers: int = typer.Option(1, "--workers", help="Worker processes"),
    seed: int | None = typer.Option(None, "--seed", help="Override the master seed"),
    out_dir: Path | None = typer.Option(None, "--out-dir", help="Write report files here"),
) -> None:
    """Run a Monte Carlo Type I / Type II error-rate experiment."""
    cfg = _config(ctx)
    with _errors("experiment"):
        if (config_file is None) == (preset is None):
            raise ValueError(
                f"pass exactly one of CONFIG or --preset (available: {list_presets()})"
            )
        config = load_config(config_file) if config_file is not None else load_preset(str(preset))
        master = seed if seed is not None else cfg.seed
        report = error_rate_experiment(config, seed=master, workers=workers)
        if out_dir is None:
            _emit_json(report.to_dict(), cfg.out)
            return
        ReportRenderer().write(report, out_dir)
        _print_summary(report)


@app.command("oracle")
def oracle_command(
    ctx: typer.Context,
    a_xx: float = typer.Option(0.3, "--a-xx"),
    a_xy: float = typer.Option(0.4, "--a-xy"),
    a_yx: float = typer.Option(0.0, "--a-yx"),
    a_yy: float = typer.Option(0.7, "--a-yy"),
    sigma_xx: float = typer.Option(1.0, "--sigma-xx"),
    sigma_xy: float = typer.Option(0.5, "--sigma-xy"),
    sigma_yy: float = typer.Option(1.0, "--sigma-yy"),
    omega: float = typer.Option(1.0, "--omega", help="Frequency for the spectral check"),
    band: tuple[float, float] | None = typer.Option(None, "--band", help="Band LO HI"),
    fmt: str | None = typer.Option(None, "--format", help="table, json or csv"),
) -> None:
    """Compare bivariate VAR(1) closed forms with the numerical pipeline."""
    cfg = _config(ctx)
    with _errors("oracle"):
        chosen = cfg.resolve_format(fmt, "table", ("table", "json", "csv"))
        params = Bivar1Params(a_xx, a_xy, a_yx, a_yy, sigma_xx, sigma_xy, sigma_yy)
        rows = oracle_comparison(params, omega, _band(band, False, None) or FULL_BAND)
        if chosen == "json":
            _emit_json(
                [
                    {
                        "quantity": r.quantity,
                        "closed_form": r.closed_form,
                        "pipeline": r.pipeline,
                        "difference": r.difference,
                    }
                    for r in rows
                ],
                cfg.out,
            )
            return
        if chosen == "csv":
            _emit_csv(
                ["quantity", "closed_form", "pipeline", "difference"],
                [(r.quantity, r.closed_form, r.pipeline, r.difference) for r in rows],
                cfg.out,
            )
            return
        table = Table(title="Bivariate VAR(1) oracle")
        table.add_column("Quantity", style="cyan")
        table.add_column("Closed form", style="magenta")
        table.add_column("Pipeline", style="magenta")
        table.add_column("|diff|", style="green")
        for r in rows:
            table.add_row(
                r.quantity, f"{r.closed_form:.12g}", f"{r.pipeline:.12g}", f"{r.difference:.2e}"
            )
        console.print(table)


if __name__ == "__main__":
    app()
