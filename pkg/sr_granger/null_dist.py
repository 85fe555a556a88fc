"""Asymptotic null laws of the single-regression GC estimator.

Under the null, N times the estimator converges to a weighted sum of iid
chi-squared variables. The weights come from the stacked autocovariance of the
null model (time domain) or from its band-averaged partial spectrum (band
limited). This module builds those laws and evaluates their CDF and quantiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize
import scipy.stats
from numpy.typing import ArrayLike, NDArray

from sr_granger.cli.logging_config import get_logger
from sr_granger.errors import (
    AccuracyNotMet,
    ConsistencyError,
    DegenerateLaw,
    NotNull,
    NotPositiveDefinite,
)
from sr_granger.gc_estimators import (
    FrequencyBand,
    band_quadrature,
    partial_covariance,
    reduced_dare_inputs,
)
from sr_granger.linalg import (
    Matrix,
    cholesky_right,
    solve_dlyap,
    symmetric_eigenvalues,
    symmetrize,
)
from sr_granger.var_model import (
    Null,
    Partition,
    VarParams,
    autocovariance,
    random_var,
    transfer_function,
)

logger = get_logger(__name__)

LawKind = Literal["time", "band"]

CDF_TOL = 1e-8
BAND_WEIGHT_FLOOR = 1e-10
WEIGHT_RATIO_LIMIT = 1e12
MC_DRAWS = 10_000_000
MC_CHUNK = 100_000
MC_SEED = 20_190_101
QUAD_LIMIT = 1000


@dataclass(frozen=True, eq=False)
class GenChi2:
    """Law of sum_i weights[i] * W_i with W_i iid chi2(multiplicity)."""

    weights: NDArray[np.float64]
    multiplicity: int
    kind: LawKind = "time"
    band: FrequencyBand | None = None

    def __post_init__(self) -> None:
        w = np.sort(np.asarray(self.weights, dtype=np.float64).ravel())[::-1].copy()
        if w.size == 0:
            raise DegenerateLaw("law has no weights")
        if not np.all(np.isfinite(w)) or w[-1] < 0:
            raise ConsistencyError("law weights must be finite and non-negative")
        if self.multiplicity < 1:
            raise ValueError(f"multiplicity must be >= 1, got {self.multiplicity}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def degrees_of_freedom(self) -> int:
        """Total chi-squared degrees of freedom, p * ny * nx for a time-domain law."""
        return int(self.weights.size * self.multiplicity)

    def sample(self, size: int, rng: np.random.Generator) -> NDArray[np.float64]:
        draws = rng.chisquare(self.multiplicity, size=(size, self.weights.size))
        return np.asarray(draws @ self.weights, dtype=np.float64)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "weights": [float(w) for w in self.weights],
            "multiplicity": self.multiplicity,
            "kind": self.kind,
        }
        if self.band is not None:
            out["band"] = self.band.to_list()
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GenChi2:
        band = data.get("band")
        return cls(
            weights=np.asarray(data["weights"], dtype=np.float64),
            multiplicity=int(data["multiplicity"]),
            kind=data.get("kind", "time"),
            band=FrequencyBand(*band) if band is not None else None,
        )


@dataclass(frozen=True)
class GammaApprox:
    """Moment-matched Gamma(shape alpha, scale beta) approximation."""

    alpha: float
    beta: float
    mu: float
    sigma2: float

    def cdf(self, x: ArrayLike) -> Any:
        return scipy.stats.gamma.cdf(x, a=self.alpha, scale=self.beta)

    def sf(self, x: ArrayLike) -> Any:
        return scipy.stats.gamma.sf(x, a=self.alpha, scale=self.beta)

    def ppf(self, q: ArrayLike) -> Any:
        return scipy.stats.gamma.ppf(q, a=self.alpha, scale=self.beta)

    def to_dict(self) -> dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta, "mu": self.mu, "sigma2": self.sigma2}


def _require_null(model: VarParams, partition: Partition) -> None:
    if not model.is_null(partition):
        raise NotNull("null law requires every A_k,xy block to be zero")
    model.ensure_stable()


def _inverse_autocov_yy(model: VarParams, partition: Partition) -> Matrix:
    """[bold-Gamma^-1]_yy over the lag-major y indices."""
    gamma = autocovariance(model).gamma
    try:
        factor = scipy.linalg.cho_factor(gamma)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite("stacked autocovariance is not positive-definite") from err
    inverse = scipy.linalg.cho_solve(factor, np.eye(gamma.shape[0]))
    idx = partition.lagged_y(model.p)
    return symmetrize(inverse[np.ix_(idx, idx)])


def _weights_from(inverse_yy: Matrix, target: Matrix) -> NDArray[np.float64]:
    # eigenvalues of [Gamma^-1]_yy T through the symmetric form R T R^T
    R = cholesky_right(inverse_yy)
    return symmetric_eigenvalues(R @ target @ R.T)


def partial_autocovariance(model: VarParams, partition: Partition) -> Matrix:
    """Stacked autocovariance of the y-subprocess driven by Sigma_yy|x."""
    Ayy, _, _, _, _ = reduced_dare_inputs(model, partition)
    m = Ayy.shape[0]
    rhs = np.zeros((m, m))
    rhs[: partition.ny, : partition.ny] = partial_covariance(model, partition)
    return solve_dlyap(Ayy, rhs)


def null_weights_time(null_model: VarParams, partition: Partition) -> GenChi2:
    """Weights of the time-domain null law at a null-space model."""
    partition.check(null_model.n)
    _require_null(null_model, partition)
    weights = _weights_from(
        _inverse_autocov_yy(null_model, partition),
        partial_autocovariance(null_model, partition),
    )
    if weights[-1] <= 0.0:
        raise ConsistencyError(f"time-domain weight {weights[-1]:.3g} is not positive")
    return GenChi2(weights=weights, multiplicity=partition.nx, kind="time")


def band_partial_spectrum(
    model: VarParams, partition: Partition, band: FrequencyBand
) -> Matrix:
    """Real part of the band-averaged stacked partial spectrum of y.

    Block (k, k') averages e^{-iw(k-k')} S_yy|x(w) over the band, where
    S_yy|x = Psi_yy Sigma_yy|x Psi_yy^*.
    """
    p, ny = model.p, partition.ny
    nodes, weights = band_quadrature(band)
    _, Psi = transfer_function(model, nodes)
    Psi_yy = Psi[:, partition.y, partition.y]
    S = Psi_yy @ partial_covariance(model, partition) @ np.conj(Psi_yy.transpose(0, 2, 1))

    averaged = {
        d: np.einsum("w,wij->ij", weights * np.exp(-1j * nodes * d), S)
        for d in range(-(p - 1), p)
    }
    out = np.zeros((p * ny, p * ny))
    for k in range(p):
        for kk in range(p):
            out[k * ny : (k + 1) * ny, kk * ny : (kk + 1) * ny] = averaged[k - kk].real
    return symmetrize(out)


def null_weights_band(
    null_model: VarParams, partition: Partition, band: FrequencyBand
) -> GenChi2:
    """Weights of the band-limited null law at a null-space model."""
    partition.check(null_model.n)
    _require_null(null_model, partition)
    weights = _weights_from(
        _inverse_autocov_yy(null_model, partition),
        band_partial_spectrum(null_model, partition, band),
    )
    low = float(weights.min())
    if low <= -BAND_WEIGHT_FLOOR:
        raise ConsistencyError(f"band weight {low:.3g} is below the numerical floor")
    weights = np.where(weights < 0.0, 0.0, weights)
    logger.info(
        "band null law",
        max_weight=float(weights.max()),
        band_measure=band.measure,
        zero_weights=int(np.sum(weights == 0.0)),
    )
    return GenChi2(weights=weights, multiplicity=partition.nx, kind="band", band=band)


def null_law(
    null_model: VarParams, partition: Partition, band: FrequencyBand | None = None
) -> GenChi2:
    if band is None:
        return null_weights_time(null_model, partition)
    return null_weights_band(null_model, partition, band)


def genchi2_moments(law: GenChi2) -> tuple[float, float]:
    """Mean and variance: (h sum lambda, 2 h sum lambda^2)."""
    h = law.multiplicity
    return float(h * np.sum(law.weights)), float(2 * h * np.sum(law.weights**2))


def gamma_approx(law: GenChi2) -> GammaApprox:
    mu, sigma2 = genchi2_moments(law)
    if mu <= 0.0 or sigma2 <= 0.0:
        raise DegenerateLaw("law has no positive weight")
    return GammaApprox(alpha=mu * mu / sigma2, beta=sigma2 / mu, mu=mu, sigma2=sigma2)


@dataclass(frozen=True)
class _Effective:
    weights: NDArray[np.float64]
    multiplicity: int
    dropped_mass: float = field(default=0.0)


def _effective(law: GenChi2) -> _Effective:
    top = float(law.weights[0])
    if top <= 0.0:
        raise DegenerateLaw("law has no positive weight")
    keep = law.weights >= top / WEIGHT_RATIO_LIMIT
    positive_dropped = law.weights[~keep & (law.weights > 0.0)]
    dropped = float(law.multiplicity * np.sum(positive_dropped))
    if positive_dropped.size:
        logger.warning(
            "dropping near-degenerate weights",
            count=int(positive_dropped.size),
            dropped_mass=dropped,
        )
    return _Effective(law.weights[keep], law.multiplicity, dropped)


def _all_equal(weights: NDArray[np.float64]) -> bool:
    return bool(weights[0] - weights[-1] <= 1e-12 * weights[0])


def _quad(func: Any, a: float, b: float, **kwargs: Any) -> tuple[float, float]:
    result = scipy.integrate.quad(func, a, b, full_output=1, limit=QUAD_LIMIT, **kwargs)
    if len(result) > 3:
        logger.debug("quadrature message", message=str(result[3]).splitlines()[0])
    return float(result[0]), float(result[1])


def _imhof(weights: NDArray[np.float64], h: int, x: float) -> tuple[float, float]:
    """CDF at x by characteristic-function inversion; returns (value, error)."""
    half_h = 0.5 * h

    def phase(u: NDArray[np.float64] | float) -> Any:
        return half_h * np.sum(np.arctan(np.multiply.outer(u, weights)), axis=-1)

    def envelope(u: NDArray[np.float64] | float) -> Any:
        log_rho = 0.25 * h * np.sum(np.log1p(np.multiply.outer(u, weights) ** 2), axis=-1)
        return 1.0 / (u * np.exp(log_rho))

    def head(u: float) -> float:
        if u == 0.0:
            return 0.5 * (h * float(np.sum(weights)) - x)
        return float(np.sin(phase(u) - 0.5 * x * u) * envelope(u))

    # split where the envelope has decayed; beyond it the integrand is a slowly
    # varying amplitude times cos/sin(x u / 2)
    split = 1.0 / float(weights[0])
    for _ in range(60):
        if envelope(split) * split <= 1e-3:
            break
        split *= 2.0

    head_value, head_err = _quad(head, 0.0, split, epsabs=1e-11, epsrel=1e-10)
    tail_value, tail_err = 0.0, 0.0
    if envelope(split) * split > 1e-14:
        w = 0.5 * x
        cos_part, cos_err = _quad(
            lambda u: float(np.sin(phase(u)) * envelope(u)),
            split,
            np.inf,
            weight="cos",
            wvar=w,
            epsabs=1e-11,
        )
        sin_part, sin_err = _quad(
            lambda u: float(np.cos(phase(u)) * envelope(u)),
            split,
            np.inf,
            weight="sin",
            wvar=w,
            epsabs=1e-11,
        )
        tail_value = cos_part - sin_part
        tail_err = cos_err + sin_err

    value = 0.5 - (head_value + tail_value) / math.pi
    return value, (head_err + tail_err) / math.pi


def _monte_carlo_cdf(
    law: GenChi2, x: float, rng: np.random.Generator | None
) -> tuple[float, float]:
    gen = rng if rng is not None else np.random.Generator(np.random.Philox(MC_SEED))
    below = 0
    for _ in range(MC_DRAWS // MC_CHUNK):
        below += int(np.count_nonzero(law.sample(MC_CHUNK, gen) <= x))
    value = below / MC_DRAWS
    return value, math.sqrt(max(value * (1.0 - value), 1.0 / MC_DRAWS) / MC_DRAWS)


@dataclass(frozen=True)
class CdfEvaluation:
    """A CDF value with how it was obtained.

    ``dropped_mass`` is the multiplicity-weighted sum of the weights below
    the ratio floor that were left out of the evaluation.
    """

    value: float
    error: float
    method: Literal["chi2", "imhof", "monte_carlo"]
    dropped_mass: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "error": self.error,
            "method": self.method,
            "dropped_mass": self.dropped_mass,
        }


def genchi2_cdf_detail(
    law: GenChi2,
    x: float,
    *,
    fallback: bool = True,
    rng: np.random.Generator | None = None,
    tol: float = CDF_TOL,
) -> CdfEvaluation:
    """P(Q <= x) for Q distributed as ``law``, with its error and method.

    Equal-weight laws use the scaled chi-squared CDF. Otherwise the Imhof
    integral is evaluated and certified against ``tol``; if that fails the
    Monte Carlo estimate over 10^7 draws is returned (with its standard
    error) or, with ``fallback=False``, AccuracyNotMet is raised.
    """
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x}")
    eff = _effective(law)
    if x == 0:
        method: Literal["chi2", "imhof"] = "chi2" if _all_equal(eff.weights) else "imhof"
        return CdfEvaluation(0.0, 0.0, method, eff.dropped_mass)
    if _all_equal(eff.weights):
        df = eff.weights.size * eff.multiplicity
        value = float(scipy.stats.chi2.cdf(x / eff.weights[0], df))
        return CdfEvaluation(value, 0.0, "chi2", eff.dropped_mass)

    value, error = _imhof(eff.weights, eff.multiplicity, float(x))
    if math.isfinite(value) and error <= tol:
        return CdfEvaluation(float(min(1.0, max(0.0, value))), error, "imhof", eff.dropped_mass)

    logger.warning("imhof integral not certified", x=x, error=error)
    if not fallback:
        raise AccuracyNotMet(f"CDF at {x} not certified: error estimate {error:.3g}")
    mc_value, se = _monte_carlo_cdf(law, x, rng)
    logger.warning("monte carlo cdf fallback", x=x, value=mc_value, standard_error=se)
    return CdfEvaluation(mc_value, se, "monte_carlo", eff.dropped_mass)


def genchi2_cdf(
    law: GenChi2,
    x: float,
    *,
    fallback: bool = True,
    rng: np.random.Generator | None = None,
    tol: float = CDF_TOL,
) -> float:
    """P(Q <= x) for Q distributed as ``law``; see :func:`genchi2_cdf_detail`."""
    return genchi2_cdf_detail(law, x, fallback=fallback, rng=rng, tol=tol).value


def genchi2_quantile(law: GenChi2, q: float, *, tol: float = CDF_TOL) -> float:
    """x with cdf(x) = q, by root bracketing from the Gamma-approximation quantile."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    eff = _effective(law)
    if _all_equal(eff.weights):
        df = eff.weights.size * eff.multiplicity
        return float(eff.weights[0] * scipy.stats.chi2.ppf(q, df))

    def excess(x: float) -> float:
        return genchi2_cdf(law, x, fallback=False, tol=tol) - q

    guess = float(gamma_approx(law).ppf(q))
    lo, hi = 0.5 * guess, 2.0 * guess
    while excess(lo) > 0.0:
        lo *= 0.5
        if lo < 1e-300:
            return 0.0
    while excess(hi) < 0.0:
        hi *= 2.0
        if not math.isfinite(hi):
            raise AccuracyNotMet(f"could not bracket the {q} quantile")
    return float(scipy.optimize.brentq(excess, lo, hi, xtol=1e-14 * hi, rtol=1e-13))


@dataclass(frozen=True)
class WeightSurveyRecord:
    rho: float
    gamma: float
    max_weight: float
    exceeds_one: bool


def weight_bound_survey(
    nx: int,
    ny: int,
    p: int,
    rhos: list[float],
    gammas: list[float],
    models_per_cell: int,
    rng: np.random.Generator,
    *,
    band: FrequencyBand | None = None,
    slack: float = 1e-8,
) -> list[WeightSurveyRecord]:
    """Largest null-law weight over random null models on a (rho, gamma) grid.

    Weights above one are logged as findings; they never raise.
    """
    partition = Partition(nx, ny)
    records: list[WeightSurveyRecord] = []
    for rho in rhos:
        for gamma in gammas:
            for _ in range(models_per_cell):
                model = random_var(nx + ny, p, partition, rho, gamma, Null(), rng)
                top = float(null_law(model, partition, band).weights[0])
                exceeds = top > 1.0 + slack
                if exceeds:
                    logger.warning(
                        "finding: null weight above one",
                        rho=rho,
                        gamma=gamma,
                        max_weight=top,
                    )
                records.append(WeightSurveyRecord(rho, gamma, top, exceeds))
    return records

