"""Closed forms for the bivariate VAR(1), used to cross-check the numerical pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.optimize
from numpy.typing import NDArray

from sr_granger.errors import InvalidModel, NotNull, Unachievable
from sr_granger.gc_estimators import (
    FULL_BAND,
    FrequencyBand,
    GcKind,
    GcValue,
    gc_band,
    gc_spectral,
    gc_time_sr,
    reduced_sigma,
)
from sr_granger.null_dist import null_weights_band, null_weights_time
from sr_granger.var_model import Partition, VarParams

BIVARIATE = Partition(nx=1, ny=1)
ROOT_FLOOR = 1e-14


@dataclass(frozen=True)
class Bivar1Params:
    """x_t = a_xx x_{t-1} + a_xy y_{t-1} + e_x, y_t = a_yx x_{t-1} + a_yy y_{t-1} + e_y."""

    a_xx: float
    a_xy: float
    a_yx: float
    a_yy: float
    sigma_xx: float = 1.0
    sigma_xy: float = 0.0
    sigma_yy: float = 1.0

    def validate(self) -> Bivar1Params:
        if self.sigma_xx <= 0 or self.sigma_yy <= 0:
            raise InvalidModel("residual variances must be positive")
        if self.sigma_xy**2 >= self.sigma_xx * self.sigma_yy:
            raise InvalidModel("residual covariance must be positive-definite")
        eig = np.linalg.eigvals(self.coefficients)
        if np.max(np.abs(eig)) >= 1.0:
            raise InvalidModel("coefficient matrix must have eigenvalues inside the unit circle")
        return self

    @property
    def coefficients(self) -> NDArray[np.float64]:
        return np.array([[self.a_xx, self.a_xy], [self.a_yx, self.a_yy]])

    @property
    def kappa(self) -> float:
        return self.sigma_xy / math.sqrt(self.sigma_xx * self.sigma_yy)

    @property
    def sigma_yy_x(self) -> float:
        """Partial variance sigma_yy (1 - kappa^2)."""
        return self.sigma_yy - self.sigma_xy**2 / self.sigma_xx

    def to_model(self) -> VarParams:
        Sigma = np.array([[self.sigma_xx, self.sigma_xy], [self.sigma_xy, self.sigma_yy]])
        return VarParams(A=self.coefficients, Sigma=Sigma)

    @classmethod
    def correlated(
        cls, a_xx: float, a_xy: float, a_yx: float, a_yy: float, kappa: float
    ) -> Bivar1Params:
        """Unit residual variances with correlation ``kappa``."""
        return cls(a_xx, a_xy, a_yx, a_yy, 1.0, kappa, 1.0)


@dataclass(frozen=True)
class BivarDerived:
    P: float
    Q: float
    v: float
    kappa: float
    omega_yy: float | None


def _null_omega_yy(params: Bivar1Params) -> float:
    a_xx, a_yx, a_yy = params.a_xx, params.a_yx, params.a_yy
    s_xx, s_xy, s_yy = params.sigma_xx, params.sigma_xy, params.sigma_yy
    p = s_xx / (1.0 - a_xx**2)
    r = (s_xy + a_xx * a_yx * p) / (1.0 - a_xx * a_yy)
    q = (
        s_yy
        + 2.0 * a_yy * a_yx * s_xy / (1.0 - a_xx * a_yy)
        + a_yx**2 * (1.0 + a_xx * a_yy) * p / (1.0 - a_xx * a_yy)
    ) / (1.0 - a_yy**2)
    return p / (p * q - r * r)


def derive(params: Bivar1Params) -> BivarDerived:
    params.validate()
    a_xy, a_yy = params.a_xy, params.a_yy
    s_xx, s_xy, s_yy = params.sigma_xx, params.sigma_xy, params.sigma_yy
    P = s_xx * (1.0 + a_yy**2) - 2.0 * s_xy * a_xy * a_yy + s_yy * a_xy**2
    Q = 2.0 * (s_xx * a_yy - s_xy * a_xy)
    disc = P * P - Q * Q
    if -ROOT_FLOOR < disc < 0.0:
        disc = 0.0
    v = 0.5 * (P + math.sqrt(disc))
    omega_yy = _null_omega_yy(params) if a_xy == 0.0 else None
    return BivarDerived(P=P, Q=Q, v=v, kappa=params.kappa, omega_yy=omega_yy)


def bivar_gc_time(params: Bivar1Params) -> GcValue:
    """log(v / sigma_xx) with v the '+' root of the reduced-variance quadratic."""
    d = derive(params)
    return GcValue(max(0.0, math.log(d.v / params.sigma_xx)), GcKind.TIME_SR)


def bivar_gc_spectral(params: Bivar1Params, omega: float) -> GcValue:
    d = derive(params)
    base = d.P - d.Q * math.cos(omega)
    value = math.log(base / (base - params.a_xy**2 * params.sigma_yy_x))
    return GcValue(max(0.0, value), GcKind.SPECTRAL, omega=float(omega))


def _null_numerator(params: Bivar1Params) -> float:
    """(1 - kappa^2) sigma_yy omega_yy for a null model."""
    if params.a_xy != 0.0:
        raise NotNull("closed-form null weight requires a_xy = 0")
    return (1.0 - params.kappa**2) * params.sigma_yy * _null_omega_yy(params.validate())


def bivar_null_lambda(params: Bivar1Params) -> float:
    """Single weight (1 - kappa^2) sigma_yy omega_yy / (1 - a_yy^2)."""
    return _null_numerator(params) / (1.0 - params.a_yy**2)


def bivar_null_lambda_spectral(params: Bivar1Params, omega: float) -> float:
    a = params.a_yy
    return _null_numerator(params) / (1.0 - 2.0 * a * math.cos(omega) + a * a)


def _arctan_antiderivative(a: float, omega: float) -> float:
    """Continuous antiderivative of 1 / (1 - 2a cos w + a^2) on [0, 2 pi]."""
    scale = 2.0 / (1.0 - a * a)
    c = (1.0 + a) / (1.0 - a)
    turns = math.floor((omega + math.pi) / (2.0 * math.pi))
    half = 0.5 * omega - turns * math.pi
    return scale * (math.atan(c * math.tan(half)) + turns * math.pi)


def bivar_null_lambda_band(params: Bivar1Params, band: FrequencyBand) -> float:
    """Band average of the spectral null weight, from the closed antiderivative."""
    a = params.a_yy
    numerator = _null_numerator(params)
    integral = _arctan_antiderivative(a, band.hi) - _arctan_antiderivative(a, band.lo)
    return numerator * integral / band.measure


def bivar_params_for_gc(
    a_xx: float,
    a_yy: float,
    a_yx: float,
    kappa: float,
    target_gc: float,
) -> Bivar1Params:
    """Unit-variance parameters whose closed-form GC equals ``target_gc`` (a_xy >= 0)."""
    if target_gc <= 0.0:
        return Bivar1Params.correlated(a_xx, 0.0, a_yx, a_yy, kappa).validate()

    def excess(a_xy: float) -> float:
        params = Bivar1Params.correlated(a_xx, a_xy, a_yx, a_yy, kappa)
        return bivar_gc_time(params).value - target_gc

    hi = 1.0
    try:
        while excess(hi) < 0.0:
            hi *= 2.0
            if hi > 2.0**30:
                raise Unachievable(f"could not bracket GC {target_gc}")
        a_xy = scipy.optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-14)
        return Bivar1Params.correlated(a_xx, a_xy, a_yx, a_yy, kappa).validate()
    except InvalidModel as err:
        raise Unachievable(
            f"no stable model with GC {target_gc} at a_xx={a_xx}, a_yy={a_yy}"
        ) from err


@dataclass(frozen=True)
class OracleRow:
    quantity: str
    closed_form: float
    pipeline: float

    @property
    def difference(self) -> float:
        return abs(self.closed_form - self.pipeline)


def oracle_comparison(
    params: Bivar1Params, omega: float, band: FrequencyBand = FULL_BAND
) -> list[OracleRow]:
    """Every closed form next to its pipeline counterpart."""
    model = params.validate().to_model()
    d = derive(params)
    rows = [
        OracleRow("reduced_sigma", d.v, float(reduced_sigma(model, BIVARIATE)[0, 0])),
        OracleRow("gc_time", bivar_gc_time(params).value, gc_time_sr(model, BIVARIATE).value),
        OracleRow(
            "gc_spectral",
            bivar_gc_spectral(params, omega).value,
            gc_spectral(model, BIVARIATE, omega).value,
        ),
        OracleRow(
            "gc_band",
            _band_reference(params, band),
            gc_band(model, BIVARIATE, band).value,
        ),
    ]
    if params.a_xy == 0.0:
        rows.append(
            OracleRow(
                "null_weight_time",
                bivar_null_lambda(params),
                float(null_weights_time(model, BIVARIATE).weights[0]),
            )
        )
        rows.append(
            OracleRow(
                "null_weight_band",
                bivar_null_lambda_band(params, band),
                float(null_weights_band(model, BIVARIATE, band).weights[0]),
            )
        )
    return rows


def _band_reference(params: Bivar1Params, band: FrequencyBand) -> float:
    """Band average of the closed spectral form by adaptive quadrature."""
    value, _ = scipy.integrate.quad(
        lambda w: bivar_gc_spectral(params, w).value,
        band.lo,
        band.hi,
        epsabs=1e-13,
        epsrel=1e-12,
        limit=200,
    )
    return float(value / band.measure)
