"""Writers for experiment reports: JSON, CSV tables and a Markdown summary."""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader, select_autoescape

from sr_granger.experiment import ErrorRateReport

PER_MODEL_FIELDS = [
    "N",
    "test",
    "model",
    "rate",
    "trials",
    "rejections",
    "unstable",
    "failures",
    "mean_scaled",
]
SUMMARY_FIELDS = [
    "N",
    "test",
    "mean",
    "lower",
    "upper",
    "pooled_rate",
    "ci_low",
    "ci_high",
    "total_variance",
    "within_variance",
    "between_variance",
    "exclusion_fraction",
    "flagged",
    "failed_models",
]


def _number(value: Any) -> Any:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return value


class ReportRenderer:
    """Renders experiment reports with the packaged Jinja2 templates."""

    def __init__(self, templates_dir: Path | None = None):
        """Initialize the renderer.

        Args:
            templates_dir: Template directory; defaults to the packaged templates
        """
        if templates_dir is None:
            templates_dir = Path(str(resources.files("sr_granger") / "templates"))
        self.templates_dir = templates_dir
        self.env = Environment(
            loader=FileSystemLoader(templates_dir),
            autoescape=select_autoescape(["html", "xml"]),
            trim_blocks=True,
            lstrip_blocks=True,
        )
        self.env.filters["fmt"] = lambda x, digits=4: (
            "n/a" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.{digits}f}"
        )

    def render_summary(self, report: ErrorRateReport) -> str:
        template = self.env.get_template("report.jinja2.md")
        return str(template.render(report=report, config=report.config))

    def write(self, report: ErrorRateReport, out_dir: Path) -> list[Path]:
        """Write report.json, per_model.csv, summary.csv and summary.md.

        Returns:
            Paths written, in that order
        """
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [
            out_dir / "report.json",
            out_dir / "per_model.csv",
            out_dir / "summary.csv",
            out_dir / "summary.md",
        ]
        paths[0].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        write_per_model_csv(paths[1], report)
        write_summary_csv(paths[2], report)
        paths[3].write_text(self.render_summary(report))
        return paths


def write_per_model_csv(path: Path, report: ErrorRateReport) -> None:
    info_keys = sorted({key for cell in report.cells for r in cell.rates for key in r.info})
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(PER_MODEL_FIELDS + info_keys)
        for cell in report.cells:
            for r in cell.rates:
                failures = ";".join(f"{k}={v}" for k, v in r.failures.items())
                row = [
                    cell.N,
                    cell.test,
                    r.model,
                    r.rate,
                    r.trials,
                    r.rejections,
                    r.unstable,
                    failures,
                    r.mean_scaled if r.mean_scaled is not None else math.nan,
                ]
                row += [r.info.get(key, math.nan) for key in info_keys]
                writer.writerow([_number(v) for v in row])


def write_summary_csv(path: Path, report: ErrorRateReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_FIELDS)
        for c in report.cells:
            row = [
                c.N,
                c.test,
                c.mean,
                c.lower,
                c.upper,
                c.pooled_rate,
                c.pooled_ci[0],
                c.pooled_ci[1],
                c.total_variance,
                c.within_variance,
                c.between_variance,
                c.exclusion_fraction,
                c.flagged,
                c.failed_models,
            ]
            writer.writerow([_number(v) for v in row])
