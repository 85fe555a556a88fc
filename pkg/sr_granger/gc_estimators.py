"""Granger-causality statistics: single- and dual-regression, spectral and band-limited."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from numpy.polynomial.legendre import leggauss
from numpy.typing import ArrayLike, NDArray

from sr_granger.cli.logging_config import get_logger
from sr_granger.errors import ConsistencyError, DimensionMismatch, SingularSpectrum
from sr_granger.linalg import Matrix, log_det_pd, solve_dare, symmetrize
from sr_granger.sampling import TimeSeries, fit_var_ols
from sr_granger.var_model import Partition, VarParams, transfer_function

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi
GC_FLOOR = 1e-12
QUAD_PANELS = 64
QUAD_ORDER = 32
QUAD_TOL = 1e-8


@dataclass(frozen=True)
class FrequencyBand:
    """Angular frequency range [lo, hi] with 0 <= lo < hi <= 2 pi."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.lo < self.hi <= TWO_PI + 1e-12):
            raise ValueError(
                f"band must satisfy 0 <= lo < hi <= 2*pi, got [{self.lo}, {self.hi}]"
            )

    @property
    def measure(self) -> float:
        return self.hi - self.lo

    def to_list(self) -> list[float]:
        return [self.lo, self.hi]

    @classmethod
    def from_hz(cls, lo: float, hi: float, fs: float) -> FrequencyBand:
        """Convert a band in Hz at sampling rate ``fs`` to radians."""
        if fs <= 0:
            raise ValueError(f"sampling rate must be positive, got {fs}")
        return cls(TWO_PI * lo / fs, TWO_PI * hi / fs)


FULL_BAND = FrequencyBand(0.0, TWO_PI)


class GcKind(str, Enum):
    TIME_SR = "time_sr"
    TIME_LR = "time_lr"
    SPECTRAL = "spectral"
    BAND = "band"


@dataclass(frozen=True)
class GcValue:
    """A non-negative GC value in nats and the statistic it came from."""

    value: float
    kind: GcKind
    omega: float | None = None
    band: FrequencyBand | None = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"value": self.value, "kind": self.kind.value}
        if self.omega is not None:
            out["omega"] = self.omega
        if self.band is not None:
            out["band"] = self.band.to_list()
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


def _floor(value: float, what: str) -> float:
    if value >= 0.0:
        return value
    if value > -GC_FLOOR:
        return 0.0
    raise ConsistencyError(f"{what} is {value:.3g}, below the numerical floor")


def _blocks(model: VarParams, partition: Partition) -> dict[str, Matrix]:
    partition.check(model.n)
    x, y = partition.x, partition.y
    return {
        "xx": np.asarray(model.Sigma[x, x]),
        "xy": np.asarray(model.Sigma[x, y]),
        "yx": np.asarray(model.Sigma[y, x]),
        "yy": np.asarray(model.Sigma[y, y]),
    }


def partial_covariance(model: VarParams, partition: Partition) -> Matrix:
    """Sigma_yy|x = Sigma_yy - Sigma_yx Sigma_xx^-1 Sigma_xy."""
    s = _blocks(model, partition)
    return symmetrize(s["yy"] - s["yx"] @ np.linalg.solve(s["xx"], s["xy"]))


def reduced_dare_inputs(
    model: VarParams, partition: Partition
) -> tuple[Matrix, Matrix, Matrix, Matrix, Matrix]:
    """(Ayy, Axy, Syy, Syx, Sxx) of the pn_y-dimensional reduced DARE."""
    p, ny = model.p, partition.ny
    lags = model.lags
    s = _blocks(model, partition)
    m = p * ny

    Ayy = np.zeros((m, m))
    for k in range(p):
        Ayy[:ny, k * ny : (k + 1) * ny] = lags[k][partition.y, partition.y]
    if p > 1:
        Ayy[ny:, : m - ny] = np.eye(m - ny)
    Axy = np.hstack([lags[k][partition.x, partition.y] for k in range(p)])

    Syy = np.zeros((m, m))
    Syy[:ny, :ny] = s["yy"]
    Syx = np.zeros((m, partition.nx))
    Syx[:ny, :] = s["yx"]
    return Ayy, Axy, Syy, Syx, s["xx"]


def reduced_sigma(model: VarParams, partition: Partition) -> Matrix:
    """Innovations covariance of the x-only subprocess, from the full model alone."""
    model.ensure_stable()
    _, sigma_r, _ = solve_dare(*reduced_dare_inputs(model, partition))
    return sigma_r


def gc_time_sr(model: VarParams, partition: Partition) -> GcValue:
    """Single-regression time-domain GC y -> x: log|Sigma^R| - log|Sigma_xx|."""
    sigma_r = reduced_sigma(model, partition)
    value = log_det_pd(sigma_r) - log_det_pd(model.Sigma[partition.x, partition.x])
    return GcValue(_floor(value, "time-domain GC"), GcKind.TIME_SR)


def gc_time_lr(data: TimeSeries, p: int, partition: Partition) -> GcValue:
    """Dual-regression (likelihood-ratio) GC from full and x-only OLS fits of order p."""
    if p < 1:
        raise DimensionMismatch(f"model order must be >= 1, got {p}")
    partition.check(data.n)
    full = fit_var_ols(data, p)
    reduced = fit_var_ols(data.columns(partition.x), p)
    value = log_det_pd(reduced.Sigma) - log_det_pd(full.Sigma[partition.x, partition.x])
    return GcValue(_floor(value, "likelihood-ratio GC"), GcKind.TIME_LR)


def gc_spectrum(
    model: VarParams, partition: Partition, omegas: ArrayLike
) -> NDArray[np.float64]:
    """Spectral GC f(w) on a frequency grid."""
    partition.check(model.n)
    _, Psi = transfer_function(model, omegas)
    S = Psi @ model.Sigma @ np.conj(Psi.transpose(0, 2, 1))
    x, y = partition.x, partition.y
    S_xx = S[:, x, x]
    Psi_xy = Psi[:, x, y]
    explained = Psi_xy @ partial_covariance(model, partition) @ np.conj(
        Psi_xy.transpose(0, 2, 1)
    )
    sign_full, log_full = np.linalg.slogdet(S_xx)
    sign_res, log_res = np.linalg.slogdet(S_xx - explained)
    if not (np.all(np.isfinite(log_full)) and np.all(np.isfinite(log_res))):
        raise SingularSpectrum("spectral determinant under- or overflowed")
    if np.any(np.real(sign_full) <= 0) or np.any(np.real(sign_res) <= 0):
        raise SingularSpectrum("spectral matrix lost positive-definiteness")
    values = np.asarray(log_full - log_res, dtype=np.float64)
    low = values.min(initial=0.0)
    if low <= -GC_FLOOR:
        raise ConsistencyError(f"spectral GC is {low:.3g}, below the numerical floor")
    return np.maximum(values, 0.0)


def gc_spectral(model: VarParams, partition: Partition, omega: float) -> GcValue:
    value = float(gc_spectrum(model, partition, [omega])[0])
    return GcValue(value, GcKind.SPECTRAL, omega=float(omega))


def band_quadrature(
    band: FrequencyBand, panels: int = QUAD_PANELS, order: int = QUAD_ORDER
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Composite Gauss-Legendre nodes on the band and weights normalized to sum 1."""
    x, w = leggauss(order)
    edges = np.linspace(band.lo, band.hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel() / band.measure
    return nodes, weights


def gc_band(
    model: VarParams,
    partition: Partition,
    band: FrequencyBand,
    *,
    panels: int = QUAD_PANELS,
    order: int = QUAD_ORDER,
) -> GcValue:
    """Band-limited GC: the average of f(w) over the band.

    A doubled-panel rule checks the result; disagreement beyond 1e-8 is attached
    as a warning rather than raised.
    """
    nodes, weights = band_quadrature(band, panels, order)
    value = float(weights @ gc_spectrum(model, partition, nodes))
    fine_nodes, fine_weights = band_quadrature(band, 2 * panels, order)
    check = float(fine_weights @ gc_spectrum(model, partition, fine_nodes))
    warnings: tuple[str, ...] = ()
    if abs(check - value) > QUAD_TOL:
        message = f"band quadrature disagreement {abs(check - value):.3g} exceeds {QUAD_TOL}"
        logger.warning("band quadrature accuracy", band=band.to_list(), error=abs(check - value))
        warnings = (message,)
    return GcValue(_floor(value, "band GC"), GcKind.BAND, band=band, warnings=warnings)
