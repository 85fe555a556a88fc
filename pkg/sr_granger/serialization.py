"""File formats: model JSON, law JSON and CSV time series."""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Any

import numpy as np

from sr_granger.errors import DimensionMismatch, InvalidModel
from sr_granger.null_dist import GenChi2
from sr_granger.sampling import TimeSeries
from sr_granger.var_model import Partition, VarParams

CSV_FORMAT = "%.17g"


def model_to_dict(model: VarParams, partition: Partition | None = None) -> dict[str, Any]:
    out: dict[str, Any] = {
        "n": model.n,
        "p": model.p,
        "A": model.A.tolist(),
        "Sigma": model.Sigma.tolist(),
    }
    if partition is not None:
        out["partition"] = {"nx": partition.nx, "ny": partition.ny}
    return out


def model_from_dict(data: dict[str, Any]) -> tuple[VarParams, Partition | None]:
    """Parse and validate a model record.

    Raises:
        InvalidModel: A key is missing or a model invariant fails; the message
            names the failed check.
    """
    try:
        n, p = int(data["n"]), int(data["p"])
        A = np.asarray(data["A"], dtype=np.float64)
        Sigma = np.asarray(data["Sigma"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as err:
        raise InvalidModel(f"malformed model record: {err}") from err
    if A.shape != (n, n * p):
        raise InvalidModel(f"A must be {n} x {n * p}, got {A.shape}")
    if Sigma.shape != (n, n):
        raise InvalidModel(f"Sigma must be {n} x {n}, got {Sigma.shape}")
    model = VarParams(A=A, Sigma=Sigma).check()

    partition = None
    if "partition" in data:
        try:
            partition = Partition(int(data["partition"]["nx"]), int(data["partition"]["ny"]))
            partition.check(n)
        except (KeyError, TypeError, DimensionMismatch) as err:
            raise InvalidModel(f"invalid partition: {err}") from err
    return model, partition


def write_model(
    path: Path, model: VarParams, partition: Partition | None = None
) -> None:
    path.write_text(json.dumps(model_to_dict(model, partition), indent=2) + "\n")


def read_model(path: Path) -> tuple[VarParams, Partition | None]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise InvalidModel(f"{path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise InvalidModel(f"{path} does not hold a model record")
    return model_from_dict(data)


def law_to_json(law: GenChi2) -> str:
    return json.dumps(law.to_dict(), indent=2)


def law_from_json(text: str) -> GenChi2:
    return GenChi2.from_dict(json.loads(text))


def series_to_csv(series: TimeSeries, header: list[str] | None = None) -> str:
    buffer = io.StringIO()
    np.savetxt(
        buffer,
        series.values,
        fmt=CSV_FORMAT,
        delimiter=",",
        header=",".join(header) if header else "",
        comments="",
    )
    return buffer.getvalue()


def write_series(path: Path, series: TimeSeries, header: list[str] | None = None) -> None:
    path.write_text(series_to_csv(series, header))


def read_series(path: Path) -> TimeSeries:
    """Read a CSV time series; a non-numeric first row is taken as a header."""
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DimensionMismatch(f"{path} is empty")
    skip = 0
    try:
        [float(cell) for cell in lines[0].split(",")]
    except ValueError:
        skip = 1
    try:
        values = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except ValueError as err:
        raise DimensionMismatch(f"{path} is not a numeric CSV: {err}") from err
    return TimeSeries(values)
