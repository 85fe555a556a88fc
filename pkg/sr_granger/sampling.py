"""Simulation from VAR models, OLS fitting, order selection and null projection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from sr_granger.cli.logging_config import get_logger
from sr_granger.errors import DimensionMismatch, NotPositiveDefinite, RankDeficient
from sr_granger.linalg import Matrix, cholesky_right, log_det_pd, symmetrize
from sr_granger.var_model import Partition, VarParams

logger = get_logger(__name__)

MIN_BURN_IN = 100


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """N x n sample; row t is u_t."""

    values: Matrix

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionMismatch(f"time series must be N x n, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DimensionMismatch("time series has non-finite values")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def N(self) -> int:
        return int(self.values.shape[0])

    @property
    def n(self) -> int:
        return int(self.values.shape[1])

    def columns(self, index: slice) -> TimeSeries:
        return TimeSeries(self.values[:, index])


class OrderCriterion(str, Enum):
    """Information criteria for VAR order selection."""

    BIC = "bic"
    HQIC = "hqic"
    AIC = "aic"

    def penalty(self, k: int, rows: int) -> float:
        if self is OrderCriterion.BIC:
            return k * math.log(rows)
        if self is OrderCriterion.HQIC:
            return 2.0 * k * math.log(math.log(rows))
        return 2.0 * k


@dataclass(frozen=True)
class OrderSelection:
    order: int
    criterion: OrderCriterion
    scores: dict[int, float] = field(default_factory=dict)


def default_burn_in(model: VarParams) -> int:
    """10 p / (1 - rho) rounded up, at least 100."""
    rho = model.spectral_radius
    if rho >= 1.0:
        return MIN_BURN_IN
    return max(MIN_BURN_IN, math.ceil(10 * model.p / (1.0 - rho)))


def simulate(
    model: VarParams,
    N: int,
    rng: np.random.Generator,
    burn_in: int | None = None,
) -> TimeSeries:
    """Generate N samples of u_t = sum_k A_k u_{t-k} + e_t with Gaussian e_t."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    burn = default_burn_in(model) if burn_in is None else burn_in
    if burn < 0:
        raise ValueError(f"burn_in must be >= 0, got {burn}")

    n, p = model.n, model.p
    total = N + burn
    R = cholesky_right(model.Sigma)
    noise = rng.standard_normal((total, n)) @ R
    A = np.asarray(model.A)

    u = np.zeros((total + p, n))
    for t in range(total):
        # u[t : t + p] reversed is (u_{t-1}, ..., u_{t-p}) in stacked order
        u[t + p] = A @ u[t : t + p][::-1].ravel() + noise[t]
    return TimeSeries(u[p + burn :])


def _lagged_design(U: Matrix, p: int, start: int) -> tuple[Matrix, Matrix]:
    N = U.shape[0]
    Y = U[start:]
    X = np.hstack([U[start - k : N - k] for k in range(1, p + 1)])
    return Y, X


def _regress(U: Matrix, p: int, start: int) -> tuple[Matrix, Matrix]:
    """OLS of u_t on p lags over rows start..N-1; returns (A, Sigma)."""
    Y, X = _lagged_design(U, p, start)
    coef, _, rank, _ = scipy.linalg.lstsq(X, Y, lapack_driver="gelsd")
    if rank < X.shape[1]:
        raise RankDeficient(
            f"regressor matrix has rank {rank} < {X.shape[1]} for order {p}"
        )
    resid = Y - X @ coef
    Sigma = symmetrize(resid.T @ resid / Y.shape[0])
    return np.asarray(coef.T), Sigma


def _check_length(data: TimeSeries, p: int, n: int | None = None) -> None:
    n = data.n if n is None else n
    if p < 1:
        raise DimensionMismatch(f"model order must be >= 1, got {p}")
    if data.N <= p * n + p:
        raise DimensionMismatch(
            f"series of length {data.N} is too short for order {p} with {n} variables"
        )


def fit_var_ols(data: TimeSeries, p: int, *, start: int | None = None) -> VarParams:
    """Fit VAR(p) by OLS on the demeaned series.

    Regresses u_t on (u_{t-1}, ..., u_{t-p}) for t = p+1..N and scales the
    residual cross-product by the row count N - p. The estimate need not be stable.

    Raises:
        RankDeficient: The regressor Gram matrix is singular.
    """
    _check_length(data, p)
    first = p if start is None else start
    U = data.values - data.values.mean(axis=0)
    A, Sigma = _regress(U, p, first)
    return VarParams(A=A, Sigma=Sigma)


def select_order(
    data: TimeSeries, p_max: int, criterion: OrderCriterion = OrderCriterion.BIC
) -> OrderSelection:
    """Choose p in 1..p_max minimizing an information criterion.

    Every order is fitted on the same rows t = p_max+1..N so that scores are
    comparable; ties go to the smaller order.
    """
    _check_length(data, p_max)
    criterion = OrderCriterion(criterion)
    rows = data.N - p_max
    scores: dict[int, float] = {}
    for p in range(1, p_max + 1):
        Sigma = fit_var_ols(data, p, start=p_max).Sigma
        try:
            log_det = log_det_pd(Sigma)
        except NotPositiveDefinite as err:
            raise RankDeficient(f"residual covariance at order {p} is singular") from err
        k = p * data.n**2
        scores[p] = rows * log_det + criterion.penalty(k, rows)
    order = min(scores, key=lambda q: (scores[q], q))
    logger.debug("order selected", criterion=criterion.value, order=order)
    return OrderSelection(order=order, criterion=criterion, scores=scores)


def project_to_null(estimate: VarParams, partition: Partition) -> VarParams:
    """Zero every A_k,xy block, leaving all other entries untouched."""
    partition.check(estimate.n)
    lags: NDArray[np.float64] = np.array(estimate.lags)
    lags[:, partition.x, partition.y] = 0.0
    return VarParams.from_lags(lags, estimate.Sigma)
