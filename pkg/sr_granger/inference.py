"""Hypothesis tests for Granger causality: the Projection Test and the LR test."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar, Literal

import scipy.stats

from sr_granger.cli.logging_config import get_logger
from sr_granger.gc_estimators import (
    FrequencyBand,
    GcValue,
    gc_band,
    gc_time_lr,
    gc_time_sr,
)
from sr_granger.null_dist import (
    GenChi2,
    gamma_approx,
    genchi2_cdf,
    genchi2_quantile,
    null_law,
)
from sr_granger.sampling import (
    OrderCriterion,
    TimeSeries,
    fit_var_ols,
    project_to_null,
    select_order,
)
from sr_granger.var_model import Partition

logger = get_logger(__name__)

NullLawKind = Literal["exact", "gamma"]


@dataclass(frozen=True)
class FixedOrder:
    p: int


@dataclass(frozen=True)
class SelectOrder:
    criterion: OrderCriterion = OrderCriterion.BIC
    p_max: int = 10


OrderPolicy = FixedOrder | SelectOrder


def resolve_order(data: TimeSeries, order: OrderPolicy | int) -> int:
    """Model order for a test: fixed, or selected on the full process."""
    if isinstance(order, int):
        return order
    if isinstance(order, FixedOrder):
        return order.p
    return select_order(data, order.p_max, order.criterion).order


@dataclass(frozen=True, eq=False)
class TestResult:
    """Outcome of one test; reject iff p_value < alpha iff scaled > critical."""

    __test__: ClassVar[bool] = False

    method: str
    statistic: GcValue
    scaled: float
    p_value: float
    critical: float
    reject: bool
    alpha: float
    fitted_order: int
    law: GenChi2 | int

    def to_dict(self) -> dict[str, Any]:
        law: Any = self.law.to_dict() if isinstance(self.law, GenChi2) else {"chi2_dof": self.law}
        return {
            "method": self.method,
            "statistic": self.statistic.to_dict(),
            "scaled": self.scaled,
            "p_value": self.p_value,
            "critical": self.critical,
            "reject": self.reject,
            "alpha": self.alpha,
            "fitted_order": self.fitted_order,
            "law": law,
        }


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def projection_test(
    data: TimeSeries,
    partition: Partition,
    alpha: float,
    order: OrderPolicy | int,
    band: FrequencyBand | None = None,
    null_law_kind: NullLawKind = "exact",
) -> TestResult:
    """Test the single-regression GC estimate against its null law at the projected fit.

    The VAR fitted to ``data`` gives the statistic; zeroing its A_k,xy blocks
    gives the null-space parameter where the generalized chi-squared law is built.

    Raises:
        UnstableFit: The fitted or projected model is not stable.
    """
    _check_alpha(alpha)
    partition.check(data.n)
    p = resolve_order(data, order)
    fit = fit_var_ols(data, p)
    statistic = gc_time_sr(fit, partition) if band is None else gc_band(fit, partition, band)
    projected = project_to_null(fit, partition).ensure_stable()
    law = null_law(projected, partition, band)
    scaled = data.N * statistic.value

    if null_law_kind == "gamma":
        approx = gamma_approx(law)
        p_value = float(approx.sf(scaled))
        critical = float(approx.ppf(1.0 - alpha))
    else:
        p_value = 1.0 - genchi2_cdf(law, scaled)
        critical = genchi2_quantile(law, 1.0 - alpha)
    p_value = min(1.0, max(0.0, p_value))

    logger.debug("projection test", order=p, scaled=scaled, p_value=p_value)
    return TestResult(
        method="projection",
        statistic=statistic,
        scaled=scaled,
        p_value=p_value,
        critical=critical,
        reject=p_value < alpha,
        alpha=alpha,
        fitted_order=p,
        law=law,
    )


def lr_test(
    data: TimeSeries, partition: Partition, alpha: float, order: OrderPolicy | int
) -> TestResult:
    """Test the dual-regression GC against chi2(p nx ny)."""
    _check_alpha(alpha)
    partition.check(data.n)
    p = resolve_order(data, order)
    statistic = gc_time_lr(data, p, partition)
    dof = p * partition.nx * partition.ny
    scaled = data.N * statistic.value
    p_value = float(scipy.stats.chi2.sf(scaled, dof))
    logger.debug("lr test", order=p, scaled=scaled, p_value=p_value)
    return TestResult(
        method="lr",
        statistic=statistic,
        scaled=scaled,
        p_value=p_value,
        critical=float(scipy.stats.chi2.isf(alpha, dof)),
        reject=p_value < alpha,
        alpha=alpha,
        fitted_order=p,
        law=dof,
    )


class GcTest(ABC):
    """A named GC hypothesis test."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Short name used in configs and reports."""

    @abstractmethod
    def run(
        self,
        data: TimeSeries,
        partition: Partition,
        alpha: float,
        order: OrderPolicy | int,
    ) -> TestResult:
        """Run the test on one series."""


class ProjectionTest(GcTest):
    def __init__(
        self, band: FrequencyBand | None = None, null_law_kind: NullLawKind = "exact"
    ):
        self.band = band
        self.null_law_kind = null_law_kind

    @property
    def name(self) -> str:
        return "projection"

    def run(
        self,
        data: TimeSeries,
        partition: Partition,
        alpha: float,
        order: OrderPolicy | int,
    ) -> TestResult:
        return projection_test(
            data, partition, alpha, order, self.band, self.null_law_kind
        )


class LikelihoodRatioTest(GcTest):
    def __init__(self, band: FrequencyBand | None = None, **_: Any):
        if band is not None:
            raise ValueError("the LR test has no band-limited form")

    @property
    def name(self) -> str:
        return "lr"

    def run(
        self,
        data: TimeSeries,
        partition: Partition,
        alpha: float,
        order: OrderPolicy | int,
    ) -> TestResult:
        return lr_test(data, partition, alpha, order)


class GcTestFactory:
    """Factory for tests by name."""

    _tests: ClassVar[dict[str, type[GcTest]]] = {
        "projection": ProjectionTest,
        "lr": LikelihoodRatioTest,
    }

    @classmethod
    def create(cls, name: str, **options: Any) -> GcTest:
        """Create the test registered under ``name``.

        Raises:
            ValueError: If the name is not registered
        """
        if name not in cls._tests:
            raise ValueError(f"Unsupported test: {name}. Supported: {cls.supported()}")
        return cls._tests[name](**options)

    @classmethod
    def supported(cls) -> list[str]:
        return list(cls._tests)
